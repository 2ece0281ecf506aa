"""Compare the compiled kernels with the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints the median time per call for each kernel and backend, the speedup,
and whether both backends returned the same result.
"""
import argparse
import timeit

import numpy as np

from mtdicl import _kernels_py
from mtdicl.core import make_rng, sample_mixture_weights, sample_transition_matrix

try:
    from mtdicl import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(rng):
    q, m, T = 5, 4, 1024
    pi = sample_transition_matrix(q, rng)
    lam = sample_mixture_weights(np.ones(m), rng)
    first = rng.integers(0, q, m).astype(np.int64)
    path_args = (first, np.cumsum(lam), np.ascontiguousarray(np.cumsum(pi, axis=1)), rng.random(T), rng.random(T))
    seq = _kernels_py.sample_path(*path_args)
    t = np.arange(m, T)
    C = np.ascontiguousarray(pi[seq[t[:, None] - np.arange(1, m + 1)], seq[t][:, None]])
    S = rng.standard_normal((256, 256))
    P = rng.standard_normal((256, 256))
    A = _kernels_py.causal_rpe_softmax(S, P)
    RV = rng.standard_normal((256, m))
    return {
        "sample_path T=1024": path_args,
        "lag_counts 1020x4": (C, lam, rng.random(C.shape[0])),
        "causal_rpe_softmax 256": (S, P),
        "rpe_value_sum 256x4": (A, RV),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args()
    rng = make_rng(2024)
    print(f"{'kernel':<26}{'python ms':>12}{'cython ms':>12}{'speedup':>10}  same")
    for label, call_args in cases(rng).items():
        fn = label.split()[0]
        py = getattr(_kernels_py, fn)
        t_py = np.median(timeit.repeat(lambda: py(*call_args), number=5, repeat=args.repeat)) / 5 * 1e3
        if _kernels is None:
            print(f"{label:<26}{t_py:>12.3f}{'n/a':>12}{'':>10}  n/a")
            continue
        cy = getattr(_kernels, fn)
        t_cy = np.median(timeit.repeat(lambda: cy(*call_args), number=5, repeat=args.repeat)) / 5 * 1e3
        a, b = py(*call_args), cy(*call_args)
        same = np.array_equal(a, b) if a.dtype.kind == "i" else np.allclose(a, b, rtol=0, atol=1e-12)
        print(f"{label:<26}{t_py:>12.3f}{t_cy:>12.3f}{t_py / t_cy:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
