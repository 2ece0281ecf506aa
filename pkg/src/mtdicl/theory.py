"""Numerical checks of the analytic results: Jacobians at the uniform point,
Hessian bounds that fix the stable EG step size, and score scaling in T."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import C_MIN, ModelConfig, check_weights, generate_batch, lag_likelihoods, softmax
from .errors import PreconditionError


@dataclass
class JacobianReport:
    md_jacobian: np.ndarray
    bayes_jacobian: np.ndarray
    max_abs_diff: float


def md_jacobian_at_zero(m: int, eta: float) -> np.ndarray:
    """Jacobian of g -> softmax(eta * g) at g = 0: (eta/m)(I - 11^T/m)."""
    if m < 1:
        raise PreconditionError(f"m must be >= 1, got {m}")
    return (eta / m) * (np.eye(m) - np.full((m, m), 1.0 / m))


def bayes_linearized_jacobian(m: int) -> np.ndarray:
    """Covariance of Dirichlet(1,...,1): entries (m delta_kj - 1) / (m^2 (m+1))."""
    if m < 1:
        raise PreconditionError(f"m must be >= 1, got {m}")
    return (m * np.eye(m) - np.ones((m, m))) / (m**2 * (m + 1))


def jacobian_report(m: int, eta: float | None = None) -> JacobianReport:
    eta = 1.0 / (m + 1) if eta is None else eta
    J_md = md_jacobian_at_zero(m, eta)
    J_b = bayes_linearized_jacobian(m)
    return JacobianReport(J_md, J_b, float(np.max(np.abs(J_md - J_b))))


def finite_difference_jacobian(f, x0, h: float = 1e-5) -> np.ndarray:
    """Central-difference Jacobian; column j is the derivative along e_j."""
    x0 = np.asarray(x0, dtype=np.float64)
    cols = []
    for j in range(x0.size):
        e = np.zeros_like(x0)
        e[j] = h
        cols.append((np.asarray(f(x0 + e)) - np.asarray(f(x0 - e))) / (2 * h))
    return np.stack(cols, axis=1)


def uniform_simplex(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` exact uniform draws on the simplex: normalized Exp(1) spacings."""
    e = rng.standard_exponential((n, m))
    return e / e.sum(axis=1, keepdims=True)


def monte_carlo_bayes_jacobian(m: int, n_samples: int, rng: np.random.Generator, h: float = 1e-3):
    """Finite-difference Jacobian at g = 0 of the tilted simplex mean
    E[lam exp(<g, lam>)] / E[exp(<g, lam>)], estimated on one shared sample.

    Returns (jacobian, standard_error). The standard error comes from the
    influence function of the sample covariance, which is what the
    difference quotient approaches as h -> 0.
    """
    lam = uniform_simplex(n_samples, m, rng)

    def tilted_mean(g):
        logw = lam @ g
        w = np.exp(logw - logw.max())
        return (w @ lam) / w.sum()

    J = finite_difference_jacobian(tilted_mean, np.zeros(m), h)
    centered = lam - lam.mean(axis=0)
    psi = centered[:, :, None] * centered[:, None, :]
    se = psi.std(axis=0, ddof=1) / np.sqrt(n_samples)
    return J, se


def first_order_remainder(m: int, direction, scale: float) -> float:
    """|| softmax(s u / (m+1)) - (uniform + Cov s u) || for unit direction u."""
    u = np.asarray(direction, dtype=np.float64)
    g = scale * u
    linear = np.full(m, 1.0 / m) + bayes_linearized_jacobian(m) @ g
    return float(np.linalg.norm(softmax(g / (m + 1)) - linear))


def remainder_ratios(m: int, direction, scales=(1e-2, 5e-3, 2.5e-3)) -> np.ndarray:
    """R(s_k) / R(s_{k+1}) for successive halvings; about 4 when the remainder is quadratic."""
    r = np.array([first_order_remainder(m, direction, s) for s in scales])
    with np.errstate(divide="ignore", invalid="ignore"):
        return r[:-1] / r[1:]


def random_directions(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.standard_normal((n, m))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def hessian_loss(pi, lam, seq) -> np.ndarray:
    """Hessian of f = -loglik: sum_t c_t c_t^T / s_t^2 with s_t = <lam, c_t>."""
    lam = check_weights(lam, interior=True)
    c = lag_likelihoods(pi, seq, lam.size)
    u = c / (c @ lam)[:, None]
    return u.T @ u


def power_iteration(M, iters: int = 200, tol: float = 1e-10) -> float:
    """Largest eigenvalue of a symmetric PSD matrix."""
    M = np.asarray(M, dtype=np.float64)
    v = np.ones(M.shape[0]) / np.sqrt(M.shape[0])
    est = 0.0
    for _ in range(iters):
        w = M @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new = float(v @ M @ v)
        if abs(new - est) <= tol * max(1.0, abs(new)):
            return new
        est = new
    return est


@dataclass
class SmoothnessReport:
    opnorm_at_uniform: float
    bound: float
    holds: bool
    global_bound: float
    global_holds: bool


def check_smoothness_bound(pi, seq, m: int, c_min: float = C_MIN) -> SmoothnessReport:
    """Hessian operator norm at the uniform point against (T - m) m^2, plus the
    whole-simplex bound (T - m) m / c_min^2 evaluated at the same point."""
    seq = np.asarray(seq)
    n = seq.size - m
    if n < 1:
        raise PreconditionError("sequence has no modelled transitions")
    H = hessian_loss(pi, np.full(m, 1.0 / m), seq)
    norm = power_iteration(H)
    bound = float(n * m**2)
    gbound = n * m / c_min**2
    slack = 1e-9 * bound
    return SmoothnessReport(norm, bound, norm <= bound + slack, gbound, norm <= gbound)


@dataclass
class ScoreScalingReport:
    n_obs: np.ndarray          # T - m per length
    mean_score: np.ndarray     # len(T_values) x m
    slope: np.ndarray
    intercept: np.ndarray
    r_squared: np.ndarray
    intercept_bounded: bool


def mean_score_at_uniform(pi, seqs, m: int) -> np.ndarray:
    """Average gradient of the log-likelihood at the uniform point over a batch of sequences."""
    pi = np.asarray(pi)
    n_seq, T = seqs.shape
    t = np.arange(m, T)
    lags = np.arange(1, m + 1)
    c = pi[seqs[:, t[:, None] - lags[None, :]], seqs[:, t][:, :, None]]
    grad = (c / c.mean(axis=2, keepdims=True)).sum(axis=1)
    return grad.mean(axis=0)


def check_score_scaling(pi, lambda_true, T_values, trials: int, rng: np.random.Generator) -> ScoreScalingReport:
    """Fit the mean score at the uniform point linearly in T - m, per component."""
    lam = check_weights(lambda_true)
    m = lam.size
    q = np.asarray(pi).shape[0]
    T_values = [int(T) for T in T_values]
    if any(T <= m for T in T_values) or trials < 1:
        raise PreconditionError("need every T > m and trials >= 1")
    n_obs = np.array([T - m for T in T_values], dtype=np.float64)
    means = []
    for T in T_values:
        seqs = generate_batch(ModelConfig(q, m, T), pi, lam, trials, rng)
        means.append(mean_score_at_uniform(pi, seqs, m))
    means = np.array(means)
    X = np.stack([n_obs, np.ones_like(n_obs)], axis=1)
    coef, *_ = np.linalg.lstsq(X, means, rcond=None)
    slope, intercept = coef
    resid = means - X @ coef
    ss_tot = ((means - means.mean(axis=0)) ** 2).sum(axis=0)
    ss_res = (resid**2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, 1.0)
    bounded = bool(np.all(np.abs(intercept) < 0.05 * np.abs(slope) * n_obs.min()))
    return ScoreScalingReport(n_obs, means, slope, intercept, r2, bounded)
