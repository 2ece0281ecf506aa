"""Experiment sweep: next-token KL of every estimator against the true
predictive, across sequence lengths, with CSV output.

Seeding: the transition matrix comes from the master stream ``(seed,)`` and
sequence ``s`` at length index ``i`` from the child stream ``(seed, i, s)``.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bayes import GIBBS_BURN_IN, GIBBS_SAMPLES, check_enumeration_size, exact_posterior_mean, gibbs_posterior_mean
from .construction import DEFAULT_DELTAS, construct_weights, eta_to_beta, run_constructed
from .core import (
    ModelConfig,
    generate_sequence,
    make_rng,
    predictive_distribution,
    sample_mixture_weights,
    sample_transition_matrix,
)
from .errors import ConfigurationError, EnumerationLimitError, PreconditionError
from .estimators import (
    TABLE_GRID,
    default_eta,
    eg_multi_step,
    em_fit,
    entropy_regularized_estimate,
    grid_search_eta,
    parse_md_steps,
    safe_eta,
)

CSV_HEADER = ["T", "estimator", "kl_mean", "kl_stderr", "eta", "wall_ms"]
SKIPPED = "skipped"
KL_FLOOR = 1e-12
ESTIMATOR_NAMES = ("em", "gibbs", "exact", "constructed", "regularized")


def kl_divergence(p, r, floor: float = KL_FLOOR) -> float:
    """KL(p || r) in nats; r is floored at ``floor`` and renormalized, 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if p.shape != r.shape or p.ndim != 1:
        raise PreconditionError(f"distributions differ in shape: {p.shape} vs {r.shape}")
    for name, v in (("p", p), ("r", r)):
        if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise PreconditionError(f"{name} is not a probability vector")
    r = np.maximum(r, floor)
    r = r / r.sum()
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(r[mask]))))


def check_estimator_name(name: str) -> str:
    if name in ESTIMATOR_NAMES:
        return name
    if name.startswith("md-"):
        try:
            parse_md_steps(name)
        except (PreconditionError, ValueError):
            raise ConfigurationError(f"estimator {name!r} needs a positive step count, e.g. md-1") from None
        return name
    raise ConfigurationError(f"unknown estimator {name!r}; expected md-<k> or one of {', '.join(ESTIMATOR_NAMES)}")


@dataclass
class ExperimentSpec:
    q: int = 5
    m: int = 4
    seq_lengths: list = field(default_factory=lambda: [64, 256, 1024])
    num_sequences: int = 200
    estimators: list = field(default_factory=lambda: ["md-1", "constructed", "gibbs"])
    seed: int = 0
    eta_policy: object = "grid"      # "grid", "default", "safe" or a positive float
    grid: tuple = TABLE_GRID
    deltas: tuple = DEFAULT_DELTAS
    beta: float | None = None        # fixed beta for "constructed"; None derives it from eta
    burn_in: int = GIBBS_BURN_IN
    samples: int = GIBBS_SAMPLES
    gamma_reg: float = 1.0
    timing: bool = False

    def __post_init__(self):
        if not self.seq_lengths or not self.estimators:
            raise ConfigurationError("need at least one sequence length and one estimator")
        if self.num_sequences < 1:
            raise ConfigurationError("num_sequences must be >= 1")
        try:
            ModelConfig(self.q, self.m, self.m + 1)
        except PreconditionError as exc:
            raise ConfigurationError(str(exc)) from None
        for T in self.seq_lengths:
            # the estimators see T - 1 tokens and must still have a transition
            if T < self.m + 2:
                raise ConfigurationError(f"sequence length {T} must be at least m + 2 = {self.m + 2}")
        for name in self.estimators:
            check_estimator_name(name)
        if isinstance(self.eta_policy, str):
            if self.eta_policy not in ("grid", "default", "safe"):
                raise ConfigurationError(f"unknown eta policy {self.eta_policy!r}")
        elif not float(self.eta_policy) > 0:
            raise ConfigurationError("a fixed eta must be positive")


@dataclass
class ResultRow:
    T: int
    estimator: str
    kl_mean: float
    kl_stderr: float
    eta: float
    wall_ms: float
    note: str = ""

    @property
    def skipped(self) -> bool:
        return bool(self.note)


def _mean_se(x):
    x = np.asarray(x, dtype=np.float64)
    se = x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else 0.0
    return float(x.mean()), float(se)


def _resolve_eta(spec: ExperimentSpec, name: str, pi, batch, cfg_ctx: ModelConfig) -> float:
    policy = spec.eta_policy
    if not isinstance(policy, str):
        return float(policy)
    if policy == "default":
        return default_eta(spec.m)
    if policy == "safe":
        return safe_eta(cfg_ctx)
    return grid_search_eta(pi, batch, name, spec.grid, spec.m)


def _estimate(spec, name, pi, context, cfg_ctx, eta, model, rng):
    """Predictive distribution of estimator ``name`` after ``context``."""
    m = spec.m
    if name.startswith("md-"):
        lam, _ = eg_multi_step(pi, context, eta, parse_md_steps(name), m)
    elif name == "constructed":
        return run_constructed(model, context).prediction
    elif name == "em":
        lam, _ = em_fit(pi, context, np.full(m, 1.0 / m))
    elif name == "regularized":
        lam, _ = entropy_regularized_estimate(pi, context, spec.gamma_reg, m)
    elif name == "gibbs":
        lam = gibbs_posterior_mean(pi, np.ones(m), context, spec.burn_in, spec.samples, rng).mean
    elif name == "exact":
        lam = exact_posterior_mean(pi, np.ones(m), context).mean
    else:  # pragma: no cover - names are validated up front
        raise ConfigurationError(name)
    return predictive_distribution(pi, lam, context)


def sweep_transition_matrix(spec: ExperimentSpec) -> np.ndarray:
    return sample_transition_matrix(spec.q, make_rng(spec.seed))


def sweep_sequence(spec: ExperimentSpec, pi, t_index: int, s_index: int, T: int):
    """(sequence, true weights) for one sweep cell. Sampling estimators use
    the separate stream ``(seed, t_index, s_index, 1)``."""
    rng = make_rng(spec.seed, t_index, s_index)
    lam = sample_mixture_weights(np.ones(spec.m), rng)
    return generate_sequence(ModelConfig(spec.q, spec.m, T), pi, lam, rng), lam


def run_sweep(spec: ExperimentSpec) -> list[ResultRow]:
    """For each T, each sequence sees its first T - 1 tokens and every
    estimator predicts token T; the score is KL(true predictive || estimate)."""
    pi = sweep_transition_matrix(spec)
    rows = []
    for ti, T in enumerate(spec.seq_lengths):
        cfg_ctx = ModelConfig(spec.q, spec.m, T - 1)
        batch = [sweep_sequence(spec, pi, ti, si, T) for si in range(spec.num_sequences)]
        truths = [predictive_distribution(pi, lam, seq[:-1]) for seq, lam in batch]
        for name in spec.estimators:
            start = time.perf_counter()
            if name == "exact":
                try:
                    check_enumeration_size(spec.m, cfg_ctx.n_obs)
                except EnumerationLimitError as exc:
                    rows.append(ResultRow(T, name, math.nan, math.nan, math.nan, 0.0, f"{SKIPPED}: {exc}"))
                    continue
            eta = math.nan
            model = None
            if name.startswith("md-") or name == "constructed":
                eta = _resolve_eta(spec, name, pi, batch, cfg_ctx)
            if name == "constructed":
                beta = spec.beta if spec.beta is not None else eta_to_beta(eta, cfg_ctx)
                model = construct_weights(pi, cfg_ctx, spec.deltas, beta)
                eta = beta / (spec.m * cfg_ctx.n_obs)
            kls = []
            for si, ((seq, _), p_true) in enumerate(zip(batch, truths)):
                est_rng = make_rng(spec.seed, ti, si, 1)
                p_hat = _estimate(spec, name, pi, seq[:-1], cfg_ctx, eta, model, est_rng)
                kls.append(kl_divergence(p_true, p_hat))
            mean, se = _mean_se(kls)
            wall = (time.perf_counter() - start) * 1e3 if spec.timing else 0.0
            rows.append(ResultRow(T, name, mean, se, eta, wall))
    return rows


def _fmt(x) -> str:
    return f"{x:.10g}"


def format_row(row: ResultRow) -> list[str]:
    if row.skipped:
        return [str(row.T), row.estimator, SKIPPED, SKIPPED, "nan", _fmt(row.wall_ms)]
    return [str(row.T), row.estimator, _fmt(row.kl_mean), _fmt(row.kl_stderr), _fmt(row.eta), _fmt(row.wall_ms)]


def emit_csv(rows, path) -> None:
    try:
        fh = open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    with fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow(format_row(row))


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ConfigurationError(f"unexpected CSV header in {path}: {header}")
        rows = []
        for rec in reader:
            T, name, kl, se, eta, wall = rec
            if kl == SKIPPED:
                rows.append(ResultRow(int(T), name, math.nan, math.nan, math.nan, float(wall), SKIPPED))
            else:
                rows.append(ResultRow(int(T), name, float(kl), float(se), float(eta), float(wall)))
        return rows


def parse_config_file(path, allowed) -> dict:
    """``key=value`` lines with ``#`` comments; keys use the flag spelling
    (dashes or underscores). Unknown keys are rejected."""
    allowed = set(allowed)
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in allowed:
                raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out
