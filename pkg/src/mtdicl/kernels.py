"""Backend selection for the inner loops.

The compiled extension is used when it was built; set ``MTDICL_BACKEND=python``
to force the NumPy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MTDICL_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

sample_path = _impl.sample_path
lag_counts = _impl.lag_counts
causal_rpe_softmax = _impl.causal_rpe_softmax
rpe_value_sum = _impl.rpe_value_sum

__all__ = ["BACKEND", "sample_path", "lag_counts", "causal_rpe_softmax", "rpe_value_sum"]
