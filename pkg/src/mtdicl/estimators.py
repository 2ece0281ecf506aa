"""Point estimators of the mixture weights from a single sequence."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    ModelConfig,
    check_weights,
    lag_likelihoods,
    log_softmax,
    predictive_distribution,
    softmax,
)
from .errors import PreconditionError

EM_TOL = 1e-10
EM_MAX_ITER = 10_000
TABLE_GRID = (1e-5, 1e-1, 1000)


@dataclass
class EstimatorTrace:
    iterates: list = field(default_factory=list)
    loglik: list = field(default_factory=list)
    converged: bool = False

    def append(self, lam, ll):
        self.iterates.append(np.array(lam, dtype=np.float64))
        self.loglik.append(float(ll))

    @property
    def n_iter(self) -> int:
        return max(len(self.iterates) - 1, 0)


def default_eta(m: int) -> float:
    """Learning rate at which one-step MD matches the Bayes mean to first order."""
    if m < 1:
        raise PreconditionError(f"m must be >= 1, got {m}")
    return 1.0 / (m + 1)


def safe_eta(cfg: ModelConfig) -> float:
    """Reciprocal of the relative-smoothness bound (T - m) m^2 at the uniform point."""
    return 1.0 / (cfg.n_obs * cfg.m**2)


def log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    if n < 1 or lo <= 0 or hi < lo:
        raise PreconditionError(f"bad log grid [{lo}, {hi}] x {n}")
    return np.logspace(np.log10(lo), np.log10(hi), n)


# -- internals on the lag-likelihood matrix c[t, g] ---------------------------

def _loglik(c, lam):
    return float(np.sum(np.log(c @ lam)))


def _grad(c, lam):
    return (c / (c @ lam)[:, None]).sum(axis=0)


def _eg(lam, grad, eta):
    with np.errstate(divide="ignore"):
        return softmax(np.log(lam) + eta * grad)


def _uniform_resp_sums(c):
    return (c / c.sum(axis=1, keepdims=True)).sum(axis=0)


def _check_eta(eta):
    if not eta > 0:
        raise PreconditionError(f"learning rate must be positive, got {eta}")
    return float(eta)


def _check_seq(seq, m):
    seq = np.asarray(seq)
    if seq.size <= m:
        raise PreconditionError(f"sequence of length {seq.size} has no transitions for order m={m}")
    return seq


# -- estimators ---------------------------------------------------------------

def eg_step(pi, seq, lam, eta: float) -> np.ndarray:
    """One exponentiated-gradient ascent step on the log-likelihood."""
    lam = check_weights(lam, interior=True)
    c = lag_likelihoods(pi, _check_seq(seq, lam.size), lam.size)
    return _eg(lam, _grad(c, lam), _check_eta(eta))


def one_step_md(pi, seq, eta: float, m: int) -> np.ndarray:
    """Softmax of ``eta * m * sum_t gamma_t`` with uniform-prior responsibilities."""
    c = lag_likelihoods(pi, _check_seq(seq, m), m)
    return softmax(_check_eta(eta) * m * _uniform_resp_sums(c))


def eg_multi_step(pi, seq, eta: float, k: int, m: int):
    """``k`` EG steps from the uniform point; returns (estimate, trace)."""
    if k < 1:
        raise PreconditionError(f"number of steps must be >= 1, got {k}")
    eta = _check_eta(eta)
    c = lag_likelihoods(pi, _check_seq(seq, m), m)
    lam = np.full(m, 1.0 / m)
    trace = EstimatorTrace()
    trace.append(lam, _loglik(c, lam))
    for _ in range(k):
        lam = _eg(lam, _grad(c, lam), eta)
        trace.append(lam, _loglik(c, lam))
    trace.converged = True
    return lam, trace


def em_fit(pi, seq, lam0, tol: float = EM_TOL, max_iter: int = EM_MAX_ITER):
    """EM for the mixture weights with known transitions.

    Stops when the log-likelihood changes by less than ``tol``. If ``max_iter``
    is hit first the trace is returned with ``converged=False``.
    """
    lam = check_weights(lam0, interior=True).copy()
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    m = lam.size
    c = lag_likelihoods(pi, _check_seq(seq, m), m)
    n = c.shape[0]
    trace = EstimatorTrace()
    ll = _loglik(c, lam)
    trace.append(lam, ll)
    for _ in range(max_iter):
        w = c * lam
        lam = (w / w.sum(axis=1, keepdims=True)).sum(axis=0) / n
        lam /= lam.sum()
        ll_new = _loglik(c, lam)
        trace.append(lam, ll_new)
        if abs(ll_new - ll) < tol:
            trace.converged = True
            break
        ll = ll_new
    return lam, trace


def entropy_regularized_estimate(
    pi,
    seq,
    gamma_reg: float,
    m: int,
    eta: float | None = None,
    max_iter: int = 200_000,
    tol: float = 1e-12,
):
    """Minimize ``-loglik(lam) + gamma_reg * sum_g lam_g log lam_g`` by EG.

    The default step is ``1 / ((T - m) m^2 + gamma_reg)``, the reciprocal of the
    relative-smoothness constant of the regularized loss; a fixed step of
    ``1 / ((T - m) m^2)`` oscillates once ``gamma_reg`` exceeds about twice that bound.
    Returns (estimate, trace); the trace stores only the first and final iterates.
    """
    if gamma_reg < 0:
        raise PreconditionError("gamma_reg must be >= 0")
    c = lag_likelihoods(pi, _check_seq(seq, m), m)
    n = c.shape[0]
    if eta is None:
        eta = 1.0 / (n * m**2 + gamma_reg)
    eta = _check_eta(eta)
    lam = np.full(m, 1.0 / m)
    trace = EstimatorTrace()
    trace.append(lam, _loglik(c, lam))
    shrink = 1.0 - eta * gamma_reg
    for _ in range(max_iter):
        with np.errstate(divide="ignore"):
            logits = shrink * np.log(lam) + eta * _grad(c, lam)
        new = softmax(logits)
        delta = np.max(np.abs(new - lam))
        lam = new
        if delta < tol:
            trace.converged = True
            break
    trace.append(lam, _loglik(c, lam))
    return lam, trace


# -- vectorized evaluation over a learning-rate grid --------------------------

def md_steps_grid(c, etas, k: int) -> np.ndarray:
    """``k``-step EG estimates for every learning rate in ``etas`` (rows)."""
    etas = np.asarray(etas, dtype=np.float64)
    m = c.shape[1]
    if k == 1:
        return softmax(etas[:, None] * (m * _uniform_resp_sums(c))[None, :])
    lam = np.full((etas.size, m), 1.0 / m)
    for _ in range(k):
        s = lam @ c.T
        grad = (1.0 / s) @ c
        with np.errstate(divide="ignore"):
            lam = softmax(np.log(lam) + etas[:, None] * grad)
    return lam


def parse_md_steps(estimator: str) -> int:
    """``'md-3'`` -> 3; ``'constructed'`` shares the one-step learning rate."""
    if estimator == "constructed":
        return 1
    if estimator.startswith("md-"):
        k = int(estimator[3:])
        if k >= 1:
            return k
    raise PreconditionError(f"grid search supports md-<k> and constructed, got {estimator!r}")


def kl_rows(p, R, floor: float = 1e-12) -> np.ndarray:
    """KL(p || R[i]) for each row, with rows of R floored at ``floor`` and renormalized."""
    R = np.maximum(R, floor)
    R = R / R.sum(axis=-1, keepdims=True)
    p = np.asarray(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(R)), 0.0)
    return terms.sum(axis=-1)


def grid_search_eta(pi, sequences, estimator: str, grid, m: int) -> float:
    """Grid point minimizing the mean next-token KL(true || estimate).

    ``sequences`` holds (full sequence, true weights) pairs; each estimator sees
    the sequence without its last token and predicts that token. Exact ties go
    to the smallest learning rate.
    """
    grid = log_grid(*grid) if isinstance(grid, tuple) else np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or len(sequences) == 0:
        raise PreconditionError("grid search needs a non-empty grid and sequence set")
    k = parse_md_steps(estimator)
    order = np.argsort(grid, kind="stable")
    grid = grid[order]
    pi = np.asarray(pi)
    total = np.zeros(grid.size)
    for seq, lam_true in sequences:
        context = np.asarray(seq)[:-1]
        p_true = predictive_distribution(pi, lam_true, context)
        c = lag_likelihoods(pi, _check_seq(context, m), m)
        lams = md_steps_grid(c, grid, k)
        prev = context[context.size - np.arange(1, m + 1)]
        total += kl_rows(p_true, lams @ pi[prev])
    mean = total / len(sequences)
    return float(grid[int(np.argmin(mean))])


__all__ = [
    "EstimatorTrace",
    "default_eta",
    "safe_eta",
    "log_grid",
    "eg_step",
    "one_step_md",
    "eg_multi_step",
    "em_fit",
    "entropy_regularized_estimate",
    "md_steps_grid",
    "grid_search_eta",
    "kl_rows",
    "log_softmax",
]
