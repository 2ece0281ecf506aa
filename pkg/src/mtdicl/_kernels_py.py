"""NumPy implementations of the inner loops.

Same signatures and semantics as the compiled ``_kernels`` module. The
categorical draws use the same cumulative-sum arithmetic as the compiled
loops, so both backends return identical samples for identical uniforms.
"""
import numpy as np


def sample_path(first, lam_cum, pi_cum, u_lag, u_tok):
    """Draw an MTD trajectory by inverse-CDF sampling from pre-drawn uniforms.

    ``first`` holds the m initial tokens (0-based); ``lam_cum`` and each row of
    ``pi_cum`` are cumulative sums of the lag weights and transition rows.
    """
    m = first.shape[0]
    T = u_lag.shape[0]
    out = np.empty(T, dtype=np.int64)
    out[:m] = first
    q = pi_cum.shape[1]
    lam_total = lam_cum[-1]
    for t in range(m, T):
        g = min(int(np.searchsorted(lam_cum, u_lag[t] * lam_total, side="right")), m - 1)
        row = pi_cum[out[t - g - 1]]
        out[t] = min(int(np.searchsorted(row, u_tok[t] * row[-1], side="right")), q - 1)
    return out


def lag_counts(C, lam, u):
    """Sample one lag per row of ``C`` with probabilities proportional to ``lam * C[t]``
    and return how often each lag was drawn."""
    cum = np.cumsum(C * lam, axis=1)
    x = u * cum[:, -1]
    idx = np.minimum((x[:, None] >= cum).sum(axis=1), C.shape[1] - 1)
    return np.bincount(idx, minlength=C.shape[1]).astype(np.int64)


def _lag_index(T):
    i = np.arange(T)
    return i[:, None] - i[None, :]


def causal_rpe_softmax(S, P):
    """Causal softmax of ``S[i, j] + P[i, i - j]`` over keys ``j <= i``."""
    T = S.shape[0]
    K = _lag_index(T)
    causal = K >= 0
    E = S + np.take_along_axis(P, np.where(causal, K, 0), axis=1)
    E = np.where(causal, E, -np.inf)
    E -= E.max(axis=1, keepdims=True)
    A = np.exp(E)
    A /= A.sum(axis=1, keepdims=True)
    return A


def rpe_value_sum(A, RV):
    """``out[i] = sum_{j <= i} A[i, j] * RV[i - j]``."""
    T = A.shape[0]
    K = _lag_index(T)
    causal = K >= 0
    # G[i, k] = A[i, i - k]
    G = np.take_along_axis(A, np.where(causal, K, 0), axis=1)
    G = np.where(causal, G, 0.0)
    return G @ RV
