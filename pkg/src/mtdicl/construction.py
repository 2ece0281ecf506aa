"""Disentangled transformer forward pass and the explicit three-layer weights
that make it compute the one-step mirror-descent predictor.

Positions are 0-based in code. A relative-position table row ``k`` (0-based)
serves query ``i`` and key ``j`` with ``i - j == k``, i.e. the 1-based row
``i - j + 1``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import C_MIN, ModelConfig, check_sequence, check_transition_matrix, predictive_distribution
from .errors import ConfigurationError, PreconditionError
from .estimators import default_eta, one_step_md

DEFAULT_DELTAS = (100.0, 100.0, 100.0)


@dataclass
class LayerWeights:
    attn: np.ndarray      # W_A, d x d
    rpe_attn: np.ndarray  # R_A, T x d
    rpe_val: np.ndarray   # R_V, T x d_R

    def check(self, d: int, T: int) -> None:
        if self.attn.shape != (d, d):
            raise ConfigurationError(f"W_A has shape {self.attn.shape}, layer input width is {d}")
        if self.rpe_attn.shape != (T, d):
            raise ConfigurationError(f"R_A has shape {self.rpe_attn.shape}, expected {(T, d)}")
        if self.rpe_val.ndim != 2 or self.rpe_val.shape[0] != T:
            raise ConfigurationError(f"R_V has shape {self.rpe_val.shape}, expected {T} rows")


@dataclass
class ConstructedTransformer:
    layers: list
    output: np.ndarray
    deltas: tuple
    beta: float
    cfg: ModelConfig

    @property
    def widths(self) -> list[int]:
        return layer_widths(self.cfg.q, self.layers)


@dataclass
class ForwardOutput:
    prediction: np.ndarray
    attention: list
    hidden: list
    lambda_readout: np.ndarray | None = None
    logits: np.ndarray | None = field(default=None, repr=False)


def _heads(layer):
    return tuple(layer) if isinstance(layer, (tuple, list)) else (layer,)


def layer_widths(d0: int, layers) -> list[int]:
    """Hidden widths d_0..d_L from ``d_l = d_{l-1} + sum_h (d_{l-1} + d_R^h)``."""
    widths = [d0]
    for layer in layers:
        d = widths[-1]
        widths.append(d + sum(d + h.rpe_val.shape[1] for h in _heads(layer)))
    return widths


def attention_head(H, head: LayerWeights):
    """One head: causal softmax of ``h_i W h_j + h_i . R_A[i-j]`` and the
    attention-weighted concatenation of ``h_j`` with ``R_V[i-j]``."""
    S = H @ head.attn @ H.T
    P = np.ascontiguousarray(H @ head.rpe_attn.T)
    A = kernels.causal_rpe_softmax(np.ascontiguousarray(S), P)
    out = A @ H
    if head.rpe_val.shape[1]:
        out = np.concatenate([out, kernels.rpe_value_sum(A, np.ascontiguousarray(head.rpe_val))], axis=1)
    return A, out


def clamp_distribution(p) -> np.ndarray:
    p = np.maximum(np.asarray(p, dtype=np.float64), 0.0)
    total = p.sum()
    if total <= 0:
        raise ConfigurationError("output layer produced no positive mass")
    return p / total


def disentangled_forward(layers, output, seq, q: int | None = None) -> ForwardOutput:
    """Run the attention-only network on a 0-based token sequence.

    ``layers`` holds one entry per layer, either a LayerWeights or a tuple of
    them for several heads. The prediction at the last position is
    ``output @ h_T``, clamped at 0 and renormalized.
    """
    output = np.asarray(output, dtype=np.float64)
    q = output.shape[0] if q is None else q
    seq = check_sequence(seq, q=q, min_length=1)
    T = seq.size
    H = np.zeros((T, q))
    H[np.arange(T), seq] = 1.0
    hidden = [H]
    attention = []
    for layer in layers:
        heads = _heads(layer)
        maps, outs = [], []
        for head in heads:
            head.check(H.shape[1], T)
            A, out = attention_head(H, head)
            maps.append(A)
            outs.append(out)
        H = np.concatenate([H, *outs], axis=1)
        hidden.append(H)
        attention.append(maps[0] if len(maps) == 1 else np.stack(maps))
    if output.shape[1] != H.shape[1]:
        raise ConfigurationError(f"W_O has {output.shape[1]} columns, final width is {H.shape[1]}")
    logits = output @ H[-1]
    return ForwardOutput(prediction=clamp_distribution(logits), attention=attention, hidden=hidden, logits=logits)


def default_beta(cfg: ModelConfig) -> float:
    return cfg.m * cfg.n_obs * default_eta(cfg.m)


def beta_to_eta(beta: float, cfg: ModelConfig) -> float:
    return beta / (cfg.m * cfg.n_obs)


def eta_to_beta(eta: float, cfg: ModelConfig) -> float:
    return eta * cfg.m * cfg.n_obs


def construct_weights(pi, cfg: ModelConfig, deltas=DEFAULT_DELTAS, beta: float | None = None) -> ConstructedTransformer:
    """Weights under which the network outputs the one-step MD predictive.

    Layer 1 turns its attention row i into the uniform-prior responsibilities
    of the lags of position i and writes them into the value RPE block.
    Layer 2 averages those over positions m+1..T. Layer 3 scores the last m
    positions by beta times the averaged responsibilities, and W_O applies
    pi^T to the attention-weighted one-hot block.
    Layer 3 appends no value RPE block (its table would be all zeros), which
    gives the widths 2q+m, 4q+3m, 8q+6m.
    """
    pi = check_transition_matrix(pi, floor=C_MIN * (1 - 1e-9))
    q, m, T = cfg.q, cfg.m, cfg.T
    if pi.shape[0] != q:
        raise PreconditionError(f"transition matrix is {pi.shape[0]}x{pi.shape[0]}, config says q={q}")
    d1, d2, d3 = (float(x) for x in deltas)
    if min(d1, d2, d3) <= 0:
        raise PreconditionError("deltas must be positive")
    beta = default_beta(cfg) if beta is None else float(beta)
    n = cfg.n_obs
    w0, w1, w2 = q, 2 * q + m, 4 * q + 3 * m
    lags = np.arange(T)  # 0-based table row = i - j

    # layer 1: responsibilities
    ra1 = np.full((T, w0), -d1)
    band = (lags >= 1) & (lags <= m)
    ra1[band] = d1
    rv1 = np.zeros((T, m))
    rv1[np.arange(1, min(m, T - 1) + 1), np.arange(min(m, T - 1))] = 1.0
    layer1 = LayerWeights(np.log(pi).T.copy(), ra1, rv1)

    # layer 2: uniform average over the last T - m positions
    ra2 = np.zeros((T, w1))
    ra2[lags >= n, :q] = -d2
    layer2 = LayerWeights(np.zeros((w1, w1)), ra2, np.zeros((T, m)))

    # layer 3: softmax of beta * averaged responsibilities over lags 1..m
    # h^(2) = [x (q) | layer-1 out (q+m) | layer-2 out: avg x (q), avg layer-1 out (q+m), zero RPE (m)]
    gamma_off = 2 * q + m + 2 * q
    ra3 = np.zeros((T, w2))
    ra3[:, :q] = -d3
    k = np.arange(min(m, T))
    ra3[k, :q] = d3
    ra3[k, gamma_off + k] = beta
    layer3 = LayerWeights(np.zeros((w2, w2)), ra3, np.zeros((T, 0)))

    out = np.zeros((q, 2 * w2))
    out[:, w2 : w2 + q] = pi.T
    return ConstructedTransformer([layer1, layer2, layer3], out, (d1, d2, d3), beta, cfg)


def lambda_readout(attention3, m: int) -> np.ndarray:
    """Layer-3 weights on the last m positions, ordered by lag (last position is lag 1)."""
    row = np.asarray(attention3)[-1]
    T = row.size
    return row[T - 1 - np.arange(min(m, T))]


def run_constructed(model: ConstructedTransformer, seq) -> ForwardOutput:
    seq = np.asarray(seq)
    if seq.size != model.cfg.T:
        raise ConfigurationError(f"weights were built for T={model.cfg.T}, sequence has length {seq.size}")
    res = disentangled_forward(model.layers, model.output, seq, q=model.cfg.q)
    res.lambda_readout = lambda_readout(res.attention[2], model.cfg.m)
    return res


@dataclass
class ConstructionReport:
    responsibility_dev: float
    lambda_dev: float
    prediction_dev: float
    eta: float
    beta: float

    @property
    def max_deviation(self) -> float:
        return max(self.responsibility_dev, self.lambda_dev, self.prediction_dev)


def layer1_responsibility_targets(pi, seq, m: int) -> np.ndarray:
    """Analytic layer-1 attention: row i holds gamma_i(i - j) on keys j with 1 <= i - j <= m,
    normalized over the lags that exist at position i."""
    pi = np.asarray(pi)
    seq = np.asarray(seq)
    T = seq.size
    target = np.zeros((T, T))
    target[0, 0] = 1.0
    for i in range(1, T):
        g = np.arange(1, min(m, i) + 1)
        c = pi[seq[i - g], seq[i]]
        target[i, i - g] = c / c.sum()
    return target


def verify_construction(pi, cfg: ModelConfig, seq, deltas=DEFAULT_DELTAS, beta: float | None = None) -> ConstructionReport:
    """Compare the constructed network with the analytic one-step MD quantities.

    (a) layer-1 attention against the responsibilities on the lag band of rows
    i > m; (b) the layer-3 readout against one_step_md at eta = beta/(m(T-m));
    (c) the prediction against the mixture of pi rows weighted by the readout.
    """
    model = construct_weights(pi, cfg, deltas, beta)
    seq = check_sequence(seq, q=cfg.q, min_length=cfg.T)
    res = run_constructed(model, seq)
    m, T = cfg.m, cfg.T
    A1 = res.attention[0]
    target = layer1_responsibility_targets(pi, seq, m)
    dev_a = 0.0
    for i in range(m, T):
        j = i - np.arange(1, m + 1)
        dev_a = max(dev_a, float(np.max(np.abs(A1[i, j] - target[i, j]))))
    eta = beta_to_eta(model.beta, cfg)
    lam_md = one_step_md(pi, seq, eta, m)
    dev_b = float(np.max(np.abs(res.lambda_readout - lam_md)))
    expected = predictive_distribution(pi, res.lambda_readout, seq)
    dev_c = float(np.max(np.abs(res.prediction - expected)))
    return ConstructionReport(dev_a, dev_b, dev_c, eta, model.beta)


@dataclass
class AttentionSummary:
    layer1_band_mass: np.ndarray    # per row i > m
    layer2_max_uniform_dev: float   # last row, positions m+1..T against 1/(T-m)
    layer2_off_mass: float
    layer3_band_mass: float         # last row, positions T-m+1..T
    layer3_off_mass: float
    matrices: list


def attention_report(output: ForwardOutput, m: int) -> AttentionSummary:
    """Structural statistics of the three attention maps of a constructed network.

    The layer-3 band is the last m positions T-m+1..T (1-based), the positions
    that hold lags 1..m of the next token.
    """
    A1, A2, A3 = (np.asarray(a) for a in output.attention[:3])
    T = A1.shape[0]
    n = T - m
    band_mass = []
    for i in range(m, T):
        band_mass.append(A1[i, i - np.arange(1, m + 1)].sum() / A1[i].sum())
    last2 = A2[-1]
    in2 = last2[m:]
    last3 = A3[-1]
    band3 = last3[T - m :].sum() if m < T else last3.sum()
    return AttentionSummary(
        layer1_band_mass=np.array(band_mass),
        layer2_max_uniform_dev=float(np.max(np.abs(in2 - 1.0 / n))) if n > 0 else 0.0,
        layer2_off_mass=float(last2[:m].sum()),
        layer3_band_mass=float(band3),
        layer3_off_mass=float(1.0 - band3),
        matrices=[A1, A2, A3],
    )


def write_attention_csv(matrices, path) -> None:
    """Long-format ``layer,row,col,value`` with 1-based layer, row and column."""
    try:
        fh = open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write attention CSV to {path}: {exc}") from exc
    with fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "row", "col", "value"])
        for layer, A in enumerate(matrices, start=1):
            A = np.asarray(A)
            for i in range(A.shape[0]):
                for j in range(A.shape[1]):
                    w.writerow([layer, i + 1, j + 1, f"{A[i, j]:.10g}"])


def read_attention_csv(path) -> list[np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    out = []
    for layer in np.unique(data[:, 0]).astype(int):
        sub = data[data[:, 0] == layer]
        r, c = int(sub[:, 1].max()), int(sub[:, 2].max())
        M = np.zeros((r, c))
        M[sub[:, 1].astype(int) - 1, sub[:, 2].astype(int) - 1] = sub[:, 3]
        out.append(M)
    return out
