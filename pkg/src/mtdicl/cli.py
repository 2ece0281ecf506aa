"""Command-line entry point.

Tokens are printed 1-based. Every subcommand accepts ``--config FILE`` with
``key=value`` lines named like the flags; explicit flags win over the file.
KL is always KL(true predictive || estimator predictive).
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness, theory
from .bayes import exact_posterior_mean, gibbs_posterior_mean
from .construction import (
    attention_report,
    construct_weights,
    run_constructed,
    verify_construction,
    write_attention_csv,
)
from .core import (
    ModelConfig,
    generate_sequence,
    make_rng,
    predictive_distribution,
    sample_mixture_weights,
    sample_transition_matrix,
    softmax,
)
from .errors import ConfigurationError, PreconditionError
from .estimators import (
    TABLE_GRID,
    default_eta,
    eg_multi_step,
    em_fit,
    entropy_regularized_estimate,
    grid_search_eta,
    safe_eta,
)

CONSTRUCTION_TOL = 1e-6


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _eta(text: str):
    if text in ("grid", "default", "safe"):
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number, grid, default or safe, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"learning rate must be positive, got {text!r}")
    return v


# flag name -> (type, default, help)
FLAGS = {
    "q": (int, 5, "alphabet size"),
    "m": (int, 4, "MTD order"),
    "T": (_int_list, [64], "sequence length(s), comma separated for sweep"),
    "seed": (int, 0, "master seed"),
    "eta": (_eta, None, "learning rate: a number, grid, default (1/(m+1)) or safe (1/((T-m)m^2)); "
            "sweep defaults to grid, estimate to default"),
    "steps": (int, 1, "number of EG steps for md estimators"),
    "estimator": (str, None, "estimator name(s), comma separated for sweep: md-<k>, em, gibbs, exact, constructed, regularized"),
    "grid_min": (float, TABLE_GRID[0], "smallest learning rate of the log grid"),
    "grid_max": (float, TABLE_GRID[1], "largest learning rate of the log grid"),
    "grid_points": (int, TABLE_GRID[2], "number of log-grid points"),
    "delta": (_float_list, [100.0], "construction saturation constant(s): one value or three"),
    "beta": (float, None, "layer-3 scale of the construction; default m(T-m)/(m+1)"),
    "burn_in": (int, 200, "Gibbs burn-in iterations"),
    "samples": (int, 2000, "Gibbs samples kept"),
    "out": (str, None, "output path"),
    "num_seq": (int, 20, "sequences per length"),
    "gamma": (float, 1.0, "entropy regularization strength"),
}


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    for name, (typ, _, help_) in FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None, help=help_)
    p.add_argument("--config", default=None, help="key=value file; flags override it")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = _Parser(prog="mtdicl", description="MTD in-context estimation testbed")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("gen", parents=[common], help="sample one sequence")
    sub.add_parser("estimate", parents=[common], help="run one estimator on one sampled sequence")
    sp = sub.add_parser("sweep", parents=[common], help="KL sweep over lengths and estimators, written as CSV")
    sp.add_argument("--timing", action="store_true", help="record wall time (otherwise 0, keeping the CSV reproducible)")
    sub.add_parser("construct-check", parents=[common], help="compare the constructed transformer with one-step MD")
    sub.add_parser("attention", parents=[common], help="attention maps of the constructed transformer as CSV")
    sub.add_parser("verify-theory", parents=[common], help="run the analytic checks and print a pass/fail table")
    return parser


def resolve_options(args) -> dict:
    """Merge defaults, config file and flags (in increasing priority)."""
    opts = {name: default for name, (_, default, _) in FLAGS.items()}
    if args.config:
        for key, text in harness.parse_config_file(args.config, FLAGS).items():
            typ = FLAGS[key][0]
            try:
                opts[key] = typ(text)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigurationError(f"{args.config}: invalid value for {key}: {text!r} ({exc})")
    for name in FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            opts[name] = v
    return opts


def _single_T(opts) -> int:
    if len(opts["T"]) != 1:
        raise ConfigurationError("this subcommand takes a single --T")
    return opts["T"][0]


def _deltas(opts):
    d = opts["delta"]
    if len(d) == 1:
        return (d[0],) * 3
    if len(d) == 3:
        return tuple(d)
    raise ConfigurationError("--delta takes one value or three")


def _grid(opts):
    return (opts["grid_min"], opts["grid_max"], opts["grid_points"])


def _sample(opts, T):
    """The same (pi, lambda, sequence) as the first cell of a sweep at length T."""
    pi = sample_transition_matrix(opts["q"], make_rng(opts["seed"]))
    rng = make_rng(opts["seed"], 0, 0)
    lam = sample_mixture_weights(np.ones(opts["m"]), rng)
    seq = generate_sequence(ModelConfig(opts["q"], opts["m"], T), pi, lam, rng)
    return pi, lam, seq


def _fmt_vec(v) -> str:
    return " ".join(f"{x:.10g}" for x in np.asarray(v))


def _write_or_print(text: str, path):
    if path:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
    else:
        sys.stdout.write(text)


def cmd_gen(opts) -> int:
    T = _single_T(opts)
    _, lam, seq = _sample(opts, T)
    _write_or_print(" ".join(str(int(t) + 1) for t in seq) + "\n", opts["out"])
    print(f"# lambda {_fmt_vec(lam)}", file=sys.stderr)
    return 0


def cmd_estimate(opts) -> int:
    T = _single_T(opts)
    m = opts["m"]
    pi, lam_true, seq = _sample(opts, T)
    name = opts["estimator"] or f"md-{opts['steps']}"
    harness.check_estimator_name(name)
    cfg = ModelConfig(opts["q"], m, T)
    eta = opts["eta"] or "default"
    if name.startswith("md-") or name == "constructed":
        if eta == "grid":
            eta = grid_search_eta(pi, [(seq, lam_true)], name, _grid(opts), m)
        elif eta == "default":
            eta = default_eta(m)
        elif eta == "safe":
            eta = safe_eta(cfg)
    if name.startswith("md-"):
        lam, _ = eg_multi_step(pi, seq, eta, int(name[3:]), m)
    elif name == "constructed":
        beta = opts["beta"] if opts["beta"] is not None else eta * m * cfg.n_obs
        lam = run_constructed(construct_weights(pi, cfg, _deltas(opts), beta), seq).lambda_readout
    elif name == "em":
        lam, _ = em_fit(pi, seq, np.full(m, 1.0 / m))
    elif name == "regularized":
        lam, _ = entropy_regularized_estimate(pi, seq, opts["gamma"], m)
    elif name == "gibbs":
        lam = gibbs_posterior_mean(pi, np.ones(m), seq, opts["burn_in"], opts["samples"],
                                   make_rng(opts["seed"], 0, 0, 1)).mean
    else:
        lam = exact_posterior_mean(pi, np.ones(m), seq).mean
    print(f"estimator {name}")
    if not isinstance(eta, str) and name.startswith(("md-", "constructed")):
        print(f"eta {eta:.10g}")
    print(f"lambda_true {_fmt_vec(lam_true)}")
    print(f"lambda_hat {_fmt_vec(lam)}")
    print(f"predictive {_fmt_vec(predictive_distribution(pi, lam, seq))}")
    return 0


def cmd_sweep(opts, timing: bool) -> int:
    names = (opts["estimator"] or "md-1,md-2,constructed,em,gibbs").split(",")
    spec = harness.ExperimentSpec(
        q=opts["q"], m=opts["m"], seq_lengths=opts["T"], num_sequences=opts["num_seq"],
        estimators=[n.strip() for n in names if n.strip()], seed=opts["seed"], eta_policy=opts["eta"] or "grid",
        grid=_grid(opts), deltas=_deltas(opts), beta=opts["beta"], burn_in=opts["burn_in"],
        samples=opts["samples"], gamma_reg=opts["gamma"], timing=timing,
    )
    rows = harness.run_sweep(spec)
    for row in rows:
        if row.skipped:
            print(f"T={row.T} {row.estimator}: {row.note}", file=sys.stderr)
    if opts["out"]:
        harness.emit_csv(rows, opts["out"])
    else:
        print(",".join(harness.CSV_HEADER))
        for row in rows:
            print(",".join(harness.format_row(row)))
    return 0


def cmd_construct_check(opts) -> int:
    T = _single_T(opts)
    cfg = ModelConfig(opts["q"], opts["m"], T)
    pi, _, seq = _sample(opts, T)
    rep = verify_construction(pi, cfg, seq, _deltas(opts), opts["beta"])
    print(f"eta {rep.eta:.10g} beta {rep.beta:.10g}")
    print(f"layer1_responsibility_dev {rep.responsibility_dev:.3e}")
    print(f"lambda_readout_dev {rep.lambda_dev:.3e}")
    print(f"prediction_dev {rep.prediction_dev:.3e}")
    ok = rep.max_deviation < CONSTRUCTION_TOL
    print(f"max_deviation {rep.max_deviation:.3e} {'PASS' if ok else 'FAIL'} (tol {CONSTRUCTION_TOL:g})")
    return 0 if ok else 1


def cmd_attention(opts) -> int:
    T = _single_T(opts)
    cfg = ModelConfig(opts["q"], opts["m"], T)
    pi, _, seq = _sample(opts, T)
    res = run_constructed(construct_weights(pi, cfg, _deltas(opts), opts["beta"]), seq)
    summary = attention_report(res, cfg.m)
    out = opts["out"] or "attention.csv"
    write_attention_csv(summary.matrices, out)
    print(f"wrote {out}")
    print(f"layer1_min_band_mass {summary.layer1_band_mass.min() if summary.layer1_band_mass.size else 1.0:.12f}")
    print(f"layer2_max_uniform_dev {summary.layer2_max_uniform_dev:.3e}")
    print(f"layer3_band_mass {summary.layer3_band_mass:.12f}")
    return 0


def cmd_verify_theory(opts) -> int:
    m = opts["m"]
    rng = make_rng(opts["seed"])
    lines = []
    rep = theory.jacobian_report(m)
    lines.append(("jacobian_equality", rep.max_abs_diff, rep.max_abs_diff < 1e-12))
    fd = theory.finite_difference_jacobian(lambda g: softmax(g / (m + 1)), np.zeros(m))
    dev = float(np.max(np.abs(fd - rep.md_jacobian)))
    lines.append(("md_jacobian_finite_difference", dev, dev < 1e-7))
    worst = 0.0
    for _ in range(50):
        q = int(rng.integers(2, 6))
        T = int(rng.integers(m + 1, 257))
        pi = sample_transition_matrix(q, rng)
        seq = generate_sequence(ModelConfig(q, m, T), pi, sample_mixture_weights(np.ones(m), rng), rng)
        sm = theory.check_smoothness_bound(pi, seq, m)
        worst = max(worst, sm.opnorm_at_uniform / sm.bound)
    lines.append(("smoothness_bound_ratio", worst, worst <= 1.0 + 1e-9))
    if m >= 2:
        ratios = np.concatenate([theory.remainder_ratios(m, u) for u in theory.random_directions(50, m, rng)])
        finite = ratios[np.isfinite(ratios)]
        ok = finite.size == ratios.size and bool(np.all((finite >= 3.0) & (finite <= 5.3)))
        lines.append(("remainder_ratio_min", float(finite.min()) if finite.size else float("nan"), ok))
        lines.append(("remainder_ratio_max", float(finite.max()) if finite.size else float("nan"), ok))
    width = max(len(n) for n, _, _ in lines)
    for name, value, ok in lines:
        print(f"{name:<{width}}  {value:.3e}  {'PASS' if ok else 'FAIL'}")
    return 0 if all(ok for _, _, ok in lines) else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    try:
        opts = resolve_options(args)
        if args.command == "gen":
            return cmd_gen(opts)
        if args.command == "estimate":
            return cmd_estimate(opts)
        if args.command == "sweep":
            return cmd_sweep(opts, args.timing)
        if args.command == "construct-check":
            return cmd_construct_check(opts)
        if args.command == "attention":
            return cmd_attention(opts)
        return cmd_verify_theory(opts)
    except (ConfigurationError, PreconditionError, OSError) as exc:
        print(f"mtdicl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
