"""Posterior mean of the mixture weights under a Dirichlet prior.

Two routes: exact summation over latent lag paths (small instances only) and
a Gibbs sampler alternating lag assignments and weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from . import kernels
from .core import check_weights, dirichlet, lag_likelihoods, predictive_distribution
from .errors import EnumerationLimitError, PreconditionError

ENUMERATION_LIMIT = 10**7
GIBBS_BURN_IN = 200
GIBBS_SAMPLES = 2000


@dataclass
class PosteriorSummary:
    mean: np.ndarray
    expected_counts: np.ndarray
    num_samples: int
    standard_error: np.ndarray
    samples: np.ndarray | None = None
    iid_standard_error: np.ndarray | None = None


def _check_prior(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 1 or alpha.size == 0 or np.any(alpha <= 0):
        raise PreconditionError("Dirichlet prior must be a non-empty vector of positive reals")
    return alpha


def _observations(pi, seq, m):
    seq = np.asarray(seq)
    if seq.size < m:
        raise PreconditionError(f"sequence of length {seq.size} is shorter than the order m={m}")
    return lag_likelihoods(pi, seq, m)


def log_dirichlet_normalizer(alpha) -> float:
    """log B(alpha) = sum log Gamma(alpha_g) - log Gamma(sum alpha)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    return float(gammaln(alpha).sum() - gammaln(alpha.sum()))


def check_enumeration_size(m: int, n_obs: int, limit: int = ENUMERATION_LIMIT) -> None:
    # compare in log space: m ** n_obs overflows nothing here but can be huge
    if n_obs > 0 and m > 1 and n_obs * np.log(m) > np.log(limit) + 1e-12:
        raise EnumerationLimitError(
            f"exact enumeration needs m^(T-m) = {m}^{n_obs} paths, above the limit {limit:.0e}"
        )


def count_class_log_weights(c) -> dict:
    """log sum over lag paths with lag-count vector k of prod_t c[t, z_t], keyed by k.

    Equivalent to enumerating all m^(T-m) paths and grouping them by counts,
    but the number of states is only the number of count vectors.
    """
    n, m = c.shape
    logc = np.log(c)
    states = {(0,) * m: 0.0}
    for t in range(n):
        nxt: dict = {}
        for k, w in states.items():
            for g in range(m):
                key = k[:g] + (k[g] + 1,) + k[g + 1 :]
                v = w + logc[t, g]
                old = nxt.get(key)
                nxt[key] = v if old is None else np.logaddexp(old, v)
        states = nxt
    return states


def exact_posterior_mean(pi, prior, seq, limit: int = ENUMERATION_LIMIT) -> PosteriorSummary:
    """Exact posterior mean by summing over every latent lag path.

    The weight of a path z is P(y | z) B(alpha + k(z)) / B(alpha); the mean is
    the weight-averaged (alpha + k(z)) / (alpha_0 + T - m).
    """
    alpha = _check_prior(prior)
    m = alpha.size
    c = _observations(pi, seq, m)
    n = c.shape[0]
    check_enumeration_size(m, n, limit)
    classes = count_class_log_weights(c)
    keys = np.array(list(classes.keys()), dtype=np.float64).reshape(-1, m)
    logw = np.array(list(classes.values()))
    logw = logw + gammaln(alpha + keys).sum(axis=1) - gammaln(alpha.sum() + n)
    w = np.exp(logw - logsumexp(logw))
    w /= w.sum()
    expected = w @ keys
    mean = (alpha + expected) / (alpha.sum() + n)
    return PosteriorSummary(
        mean=mean,
        expected_counts=expected,
        num_samples=int(m**n),
        standard_error=np.zeros(m),
    )


def gibbs_posterior_mean(
    pi,
    prior,
    seq,
    burn_in: int = GIBBS_BURN_IN,
    num_samples: int = GIBBS_SAMPLES,
    rng: np.random.Generator | None = None,
    keep_samples: bool = False,
) -> PosteriorSummary:
    """Gibbs sampler started at the uniform point.

    Given the weights, the lag assignments are conditionally independent, so a
    whole sweep draws them together. ``standard_error`` comes from batch means
    and so accounts for autocorrelation; the naive i.i.d. value is kept in
    ``iid_standard_error``.
    """
    if burn_in < 0 or num_samples < 1:
        raise PreconditionError("need burn_in >= 0 and num_samples >= 1")
    if rng is None:
        raise PreconditionError("gibbs_posterior_mean needs an explicit rng")
    alpha = _check_prior(prior)
    m = alpha.size
    c = np.ascontiguousarray(_observations(pi, seq, m))
    n = c.shape[0]
    lam = np.full(m, 1.0 / m)
    draws = np.empty((num_samples, m))
    counts_sum = np.zeros(m)
    for it in range(burn_in + num_samples):
        counts = kernels.lag_counts(c, lam, rng.random(n))
        lam = dirichlet(alpha + counts, rng)
        if it >= burn_in:
            draws[it - burn_in] = lam
            counts_sum += counts
    mean = draws.mean(axis=0)
    iid = draws.std(axis=0, ddof=1) / np.sqrt(num_samples) if num_samples > 1 else np.zeros(m)
    return PosteriorSummary(
        mean=mean,
        expected_counts=counts_sum / num_samples,
        num_samples=num_samples,
        standard_error=batch_means_standard_error(draws),
        samples=draws if keep_samples else None,
        iid_standard_error=iid,
    )


def batch_means_standard_error(draws) -> np.ndarray:
    """Standard error of the column means of a Markov chain from
    floor(sqrt(K)) non-overlapping batches; i.i.d. formula when K < 16."""
    draws = np.asarray(draws, dtype=np.float64)
    k = draws.shape[0]
    if k < 2:
        return np.zeros(draws.shape[1])
    n_batches = int(np.sqrt(k))
    if n_batches < 4:
        return draws.std(axis=0, ddof=1) / np.sqrt(k)
    size = k // n_batches
    batches = draws[: n_batches * size].reshape(n_batches, size, -1).mean(axis=1)
    return batches.std(axis=0, ddof=1) / np.sqrt(n_batches)


def bayes_predictive(pi, mean, context) -> np.ndarray:
    """Predictive law of the next token under the posterior mean weights."""
    return predictive_distribution(pi, check_weights(mean), context)


def monte_carlo_predictive(pi, samples, context):
    """Average of the per-sample predictives; returns (mean, standard error)."""
    samples = np.asarray(samples, dtype=np.float64)
    m = samples.shape[1]
    context = np.asarray(context)
    if context.size < m:
        raise PreconditionError(f"context of length {context.size} is shorter than the order m={m}")
    prev = context[context.size - np.arange(1, m + 1)]
    per_sample = samples @ np.asarray(pi)[prev]
    k = per_sample.shape[0]
    se = per_sample.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.zeros(per_sample.shape[1])
    return per_sample.mean(axis=0), se
