"""MTD model substrate: configuration, sampling, likelihood, gradient, responsibilities.

Tokens are stored 0-based (``0..q-1``) everywhere inside the library; the CLI
and file formats convert to the 1-based alphabet ``1..q`` at the boundary.
Lag ``g`` (1-based, ``1 <= g <= m``) of position ``t`` refers to ``y[t - g]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import PreconditionError

C_MIN = 1e-6
ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    q: int
    m: int
    T: int

    def __post_init__(self):
        if self.q < 2:
            raise PreconditionError(f"alphabet size q must be >= 2, got {self.q}")
        if self.m < 1:
            raise PreconditionError(f"order m must be >= 1, got {self.m}")
        if self.T <= self.m:
            raise PreconditionError(f"sequence length T must exceed m={self.m}, got {self.T}")

    @property
    def n_obs(self) -> int:
        """Number of modelled transitions, T - m."""
        return self.T - self.m

    def with_length(self, T: int) -> "ModelConfig":
        return ModelConfig(self.q, self.m, T)


def make_rng(seed, *path: int) -> np.random.Generator:
    """Generator for the child stream ``(seed, *path)``.

    Identical arguments give identical streams; distinct paths give
    independent streams (SeedSequence spawn keys).
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


# -- validation --------------------------------------------------------------

def check_transition_matrix(pi, floor: float | None = None) -> np.ndarray:
    pi = np.asarray(pi, dtype=np.float64)
    if pi.ndim != 2 or pi.shape[0] != pi.shape[1] or pi.shape[0] < 2:
        raise PreconditionError(f"transition matrix must be q x q with q >= 2, got shape {pi.shape}")
    if np.any(pi < 0) or not np.all(np.isfinite(pi)):
        raise PreconditionError("transition matrix has negative or non-finite entries")
    if np.max(np.abs(pi.sum(axis=1) - 1.0)) > 1e-9:
        raise PreconditionError("transition matrix rows must sum to 1")
    if floor is not None and pi.min() < floor:
        raise PreconditionError(f"transition entry {pi.min():.3g} below the floor {floor:g}")
    return pi


def check_weights(lam, m: int | None = None, interior: bool = False) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim != 1 or lam.size == 0:
        raise PreconditionError(f"mixture weights must be a non-empty vector, got shape {lam.shape}")
    if m is not None and lam.size != m:
        raise PreconditionError(f"expected {m} mixture weights, got {lam.size}")
    if np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-9:
        raise PreconditionError("mixture weights must lie on the probability simplex")
    if interior and np.any(lam <= 0):
        raise PreconditionError("mixture weights must be strictly positive")
    return lam


def check_sequence(seq, q: int | None = None, min_length: int = 0) -> np.ndarray:
    seq = np.asarray(seq)
    if seq.ndim != 1 or not np.issubdtype(seq.dtype, np.integer):
        raise PreconditionError("token sequence must be a 1-d integer array")
    if seq.size < min_length:
        raise PreconditionError(f"sequence of length {seq.size} is shorter than the required {min_length}")
    if q is not None and seq.size and (seq.min() < 0 or seq.max() >= q):
        raise PreconditionError(f"tokens must lie in 0..{q - 1}")
    return seq.astype(np.int64, copy=False)


def floor_rows(pi, c_min: float = C_MIN) -> np.ndarray:
    """Raise entries to ``c_min`` and take the excess back from entries above the floor.

    Entries at the floor stay exactly ``c_min``; the others shrink
    proportionally to their distance from the floor, so every row still sums to 1.
    """
    pi = np.maximum(np.asarray(pi, dtype=np.float64), c_min)
    excess = pi.sum(axis=1, keepdims=True) - 1.0
    slack = pi - c_min
    pi = pi - excess * slack / slack.sum(axis=1, keepdims=True)
    return np.maximum(pi, c_min)


# -- sampling ----------------------------------------------------------------

def dirichlet(alpha, rng: np.random.Generator) -> np.ndarray:
    """One Dirichlet draw from normalized gamma variates."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha <= 0):
        raise PreconditionError("Dirichlet concentration must be positive")
    g = rng.standard_gamma(alpha)
    total = g.sum()
    if total == 0.0:
        # every variate underflowed (tiny alpha); fall back to a uniform vertex
        out = np.zeros_like(alpha)
        out[rng.integers(alpha.size)] = 1.0
        return out
    return g / total


def sample_mixture_weights(alpha, rng: np.random.Generator) -> np.ndarray:
    return dirichlet(alpha, rng)


def sample_transition_matrix(q: int, rng: np.random.Generator, c_min: float = C_MIN) -> np.ndarray:
    """Rows i.i.d. Dirichlet(1, ..., 1), floored at ``c_min``."""
    if q < 2:
        raise PreconditionError(f"q must be >= 2, got {q}")
    g = rng.standard_gamma(np.ones((q, q)))
    return floor_rows(g / g.sum(axis=1, keepdims=True), c_min)


def generate_sequence(cfg: ModelConfig, pi, lam, rng: np.random.Generator) -> np.ndarray:
    """Sample ``y_1..y_T``: m uniform initial tokens, then the MTD recursion."""
    pi = check_transition_matrix(pi)
    lam = check_weights(lam, cfg.m)
    if pi.shape[0] != cfg.q:
        raise PreconditionError(f"transition matrix is {pi.shape[0]}x{pi.shape[0]}, config says q={cfg.q}")
    first = rng.integers(0, cfg.q, size=cfg.m).astype(np.int64)
    u_lag = rng.random(cfg.T)
    u_tok = rng.random(cfg.T)
    return kernels.sample_path(first, np.cumsum(lam), np.ascontiguousarray(np.cumsum(pi, axis=1)), u_lag, u_tok)


def generate_batch(cfg: ModelConfig, pi, lam, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent sequences sharing ``lam``, vectorized over sequences."""
    pi = check_transition_matrix(pi)
    lam = check_weights(lam, cfg.m)
    out = np.empty((n, cfg.T), dtype=np.int64)
    out[:, : cfg.m] = rng.integers(0, cfg.q, size=(n, cfg.m))
    pi_cum = np.cumsum(pi, axis=1)
    lam_cum = np.cumsum(lam)
    rows = np.arange(n)
    for t in range(cfg.m, cfg.T):
        g = np.minimum(np.searchsorted(lam_cum, rng.random(n) * lam_cum[-1], side="right"), cfg.m - 1)
        prev = out[rows, t - g - 1]
        cum = pi_cum[prev]
        x = rng.random(n) * cum[:, -1]
        out[:, t] = np.minimum((x[:, None] >= cum).sum(axis=1), cfg.q - 1)
    return out


# -- likelihood machinery ----------------------------------------------------

def lag_likelihoods(pi, seq, m: int) -> np.ndarray:
    """Matrix ``c[t, g-1] = pi(y[t-g], y[t])`` for the modelled positions t = m..T-1 (0-based)."""
    seq = np.asarray(seq)
    T = seq.size
    if T <= m:
        return np.empty((0, m))
    t = np.arange(m, T)
    lags = np.arange(1, m + 1)
    return np.asarray(pi)[seq[t[:, None] - lags[None, :]], seq[t][:, None]]


def predictive_distribution(pi, lam, context) -> np.ndarray:
    """Next-token law after ``context``: ``sum_g lam_g * pi(context[-g], :)``."""
    pi = np.asarray(pi, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    m = lam.size
    context = np.asarray(context)
    if context.size < m:
        raise PreconditionError(f"context of length {context.size} is shorter than the order m={m}")
    prev = context[context.size - np.arange(1, m + 1)]
    return lam @ pi[prev]


def log_likelihood(pi, lam, seq) -> float:
    lam = np.asarray(lam, dtype=np.float64)
    c = lag_likelihoods(pi, seq, lam.size)
    return float(np.sum(np.log(c @ lam)))


def log_likelihood_gradient(pi, lam, seq) -> np.ndarray:
    """Component g: ``sum_t pi(y[t-g], y[t]) / sum_h lam_h pi(y[t-h], y[t])``."""
    lam = np.asarray(lam, dtype=np.float64)
    c = lag_likelihoods(pi, seq, lam.size)
    return (c / (c @ lam)[:, None]).sum(axis=0)


def responsibilities(pi, lam, seq) -> np.ndarray:
    """Posterior lag probabilities, one row per modelled position (T - m rows)."""
    lam = np.asarray(lam, dtype=np.float64)
    w = lag_likelihoods(pi, seq, lam.size) * lam
    return w / w.sum(axis=1, keepdims=True)


def early_responsibilities(pi, seq, m: int) -> list[np.ndarray]:
    """Uniform-prior responsibilities for positions 2..m (1-based), each normalized
    over the ``i - 1`` lags that exist there."""
    pi = np.asarray(pi)
    seq = np.asarray(seq)
    rows = []
    for t in range(1, min(m, seq.size)):
        c = pi[seq[t - np.arange(1, t + 1)], seq[t]]
        rows.append(c / c.sum())
    return rows


def log_softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x - logsumexp(x, axis=-1, keepdims=True)


def softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)
