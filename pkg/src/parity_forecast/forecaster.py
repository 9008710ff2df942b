"""Multi-horizon, multi-quantile feed-forward forecaster trained by plain
mini-batch gradient descent, with the de-biasing adjustments wired between
the forward pass and backpropagation.

The network maps (standardized encoder window, standardized exogenous
window, exog-present flag, z-scored log population, demographic fractions)
to horizon x quantile outputs in per-unit standardized target space.

Unit conventions: the network's raw outputs live in per-unit standardized
target space, which keeps parameters and activations O(1) across units with
very different case volumes; the affine inversion back to case units happens
before any loss is computed.  Training descends the case-unit loss itself,
so the quantity backpropagated is exactly the quantity the de-biasing
adjustment multiplies and the per-epoch history reports.

Everything runs in float64 and all randomness comes from PCG64 streams
spawned from the config seed, so identical (data, config, method) runs give
bit-identical parameter trajectories.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .debias import (
    BatchContext,
    DebiasMethod,
    demopts_adjust,
    demopts_multiplier,
    group_residual_penalty,
    individual_residual_penalty,
    sufficiency_penalty,
)
from .errors import (
    ConfigError,
    DimensionError,
    DivergenceError,
    DomainError,
    EmptyInputError,
    KinkError,
    MissingUnitError,
)
from .loss import pbl_avg_matrix, pinball_matrix
from .panel import DEMOGRAPHIC_LABELS, WindowSample, majority_label_from_fractions

log = logging.getLogger(__name__)

DEFAULT_QUANTILES = (0.02, 0.1, 0.25, 0.5, 0.75, 0.9, 0.98)
CHECKPOINT_FORMAT = "parity-forecast-checkpoint-v1"


@dataclass(frozen=True)
class ModelConfig:
    encoder_len: int = 21
    horizon: int = 7
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    hidden_sizes: tuple[int, ...] = (32,)
    learning_rate: float = 0.02
    batch_size: int = 64
    epochs: int = 60
    seed: int = 0
    use_static_demographics: bool = True
    sort_quantiles: bool = False

    def __post_init__(self):
        if self.encoder_len < 1 or self.horizon < 1:
            raise ConfigError(f"encoder_len and horizon must be >= 1, got {self.encoder_len}, {self.horizon}")
        qs = self.quantiles
        if not qs or any(not 0.0 < q < 1.0 for q in qs) or any(b <= a for a, b in zip(qs, qs[1:])):
            raise ConfigError(f"quantiles must be strictly increasing within (0, 1), got {qs}")
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("learning_rate must be >= 0, batch_size >= 1, epochs >= 0")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"hidden layer sizes must be positive, got {self.hidden_sizes}")

    @property
    def input_dim(self) -> int:
        return 2 * self.encoder_len + 2 + (4 if self.use_static_demographics else 0)

    @property
    def output_dim(self) -> int:
        return self.horizon * len(self.quantiles)


@dataclass(frozen=True)
class QuantileForecast:
    """Case-unit predictions for one sample: (horizon, n_quantiles)."""

    unit_id: str
    values: np.ndarray
    lookaheads: np.ndarray
    first_target_date: object = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise DomainError(f"non-finite forecast values for unit {self.unit_id!r}")


@dataclass
class Scalers:
    """Standardization statistics fit on the training windows only."""

    unit_mean: dict[str, float]
    unit_sd: dict[str, float]
    exog_mean: float
    exog_sd: float
    logpop_mean: float
    logpop_sd: float


@dataclass
class TrainedModel:
    config: ModelConfig
    seed: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head_weights: dict[str, np.ndarray]
    head_biases: dict[str, np.ndarray]
    scalers: Scalers
    method: str = "none"
    loss_history: list[float] = field(default_factory=list)

    @property
    def parameter_count(self) -> int:
        main = sum(w.size + b.size for w, b in zip(self.weights, self.biases))
        heads = sum(w.size for w in self.head_weights.values())
        heads += sum(b.size for b in self.head_biases.values())
        return main + heads

    def parameters_equal(self, other: "TrainedModel") -> bool:
        if len(self.weights) != len(other.weights):
            return False
        same = all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
        same &= all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        same &= all(np.array_equal(self.head_weights[k], other.head_weights[k]) for k in self.head_weights)
        same &= all(np.array_equal(self.head_biases[k], other.head_biases[k]) for k in self.head_biases)
        return bool(same)

    # -- checkpoint serialization (JSON, repr floats: bit-exact round trip) --

    def to_json_dict(self) -> dict:
        cfg = self.config
        return {
            "format": CHECKPOINT_FORMAT,
            "config": {
                "encoder_len": cfg.encoder_len,
                "horizon": cfg.horizon,
                "quantiles": list(cfg.quantiles),
                "hidden_sizes": list(cfg.hidden_sizes),
                "learning_rate": cfg.learning_rate,
                "batch_size": cfg.batch_size,
                "epochs": cfg.epochs,
                "seed": cfg.seed,
                "use_static_demographics": cfg.use_static_demographics,
                "sort_quantiles": cfg.sort_quantiles,
            },
            "seed": self.seed,
            "method": self.method,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "head_weights": {k: w.tolist() for k, w in self.head_weights.items()},
            "head_biases": {k: b.tolist() for k, b in self.head_biases.items()},
            "scalers": {
                "unit_mean": self.scalers.unit_mean,
                "unit_sd": self.scalers.unit_sd,
                "exog_mean": self.scalers.exog_mean,
                "exog_sd": self.scalers.exog_sd,
                "logpop_mean": self.scalers.logpop_mean,
                "logpop_sd": self.scalers.logpop_sd,
            },
            "loss_history": self.loss_history,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1) + "\n")

    @classmethod
    def from_json_dict(cls, payload: dict) -> "TrainedModel":
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise DimensionError(f"unrecognized checkpoint format {payload.get('format')!r}")
        cfg = payload["config"]
        config = ModelConfig(
            encoder_len=cfg["encoder_len"],
            horizon=cfg["horizon"],
            quantiles=tuple(cfg["quantiles"]),
            hidden_sizes=tuple(cfg["hidden_sizes"]),
            learning_rate=cfg["learning_rate"],
            batch_size=cfg["batch_size"],
            epochs=cfg["epochs"],
            seed=cfg["seed"],
            use_static_demographics=cfg["use_static_demographics"],
            sort_quantiles=cfg["sort_quantiles"],
        )
        sc = payload["scalers"]
        return cls(
            config=config,
            seed=payload["seed"],
            weights=[np.array(w, dtype=float) for w in payload["weights"]],
            biases=[np.array(b, dtype=float) for b in payload["biases"]],
            head_weights={k: np.array(w, dtype=float) for k, w in payload["head_weights"].items()},
            head_biases={k: np.array(b, dtype=float) for k, b in payload["head_biases"].items()},
            scalers=Scalers(
                unit_mean=dict(sc["unit_mean"]),
                unit_sd=dict(sc["unit_sd"]),
                exog_mean=sc["exog_mean"],
                exog_sd=sc["exog_sd"],
                logpop_mean=sc["logpop_mean"],
                logpop_sd=sc["logpop_sd"],
            ),
            method=payload["method"],
            loss_history=list(payload["loss_history"]),
        )

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Initialization and feature assembly
# ---------------------------------------------------------------------------

def init_model(config: ModelConfig, scalers: Scalers, method: str = "none") -> TrainedModel:
    """Randomly initialize parameters; group heads are always allocated so
    the parameter layout is a pure function of the config."""
    ss = np.random.SeedSequence(config.seed)
    init_rng = np.random.Generator(np.random.PCG64(ss.spawn(2)[0]))

    sizes = [config.input_dim, *config.hidden_sizes, config.output_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(init_rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))

    trunk_dim = sizes[-2]
    head_weights, head_biases = {}, {}
    for label in DEMOGRAPHIC_LABELS:
        head_weights[label] = init_rng.normal(0.0, 1.0 / math.sqrt(trunk_dim), size=(trunk_dim, config.output_dim))
        head_biases[label] = np.zeros(config.output_dim)

    return TrainedModel(
        config=config,
        seed=config.seed,
        weights=weights,
        biases=biases,
        head_weights=head_weights,
        head_biases=head_biases,
        scalers=scalers,
        method=method,
    )


def fit_scalers(train_windows: list[WindowSample], config: ModelConfig) -> Scalers:
    """Per-unit target statistics and global exog / log-population statistics
    from the training windows."""
    if not train_windows:
        raise EmptyInputError("cannot fit scalers on an empty training set")
    per_unit: dict[str, list[np.ndarray]] = {}
    pops: dict[str, float] = {}
    exog_chunks = []
    for w in train_windows:
        per_unit.setdefault(w.unit_id, []).append(np.concatenate([w.encoder_target, w.horizon_targets]))
        pops[w.unit_id] = float(w.population)
        if w.exog_present:
            exog_chunks.append(w.encoder_exog)

    unit_mean, unit_sd = {}, {}
    for uid, chunks in per_unit.items():
        vals = np.concatenate(chunks)
        unit_mean[uid] = float(vals.mean())
        sd = float(vals.std())
        unit_sd[uid] = sd if sd > 1e-12 else 1.0

    if exog_chunks:
        ex = np.concatenate(exog_chunks)
        exog_mean, exog_sd = float(ex.mean()), float(ex.std())
        if exog_sd <= 1e-12:
            exog_sd = 1.0
    else:
        exog_mean, exog_sd = 0.0, 1.0

    logpops = np.log(np.array(list(pops.values())))
    logpop_mean = float(logpops.mean())
    logpop_sd = float(logpops.std())
    if logpop_sd <= 1e-12:
        logpop_sd = 1.0
    return Scalers(unit_mean, unit_sd, exog_mean, exog_sd, logpop_mean, logpop_sd)


def _assemble_features(model: TrainedModel, samples: list[WindowSample]):
    """Build (X, mu, sigma, y_case) for a batch; raises on shape mismatch or
    units the model has no training statistics for."""
    cfg = model.config
    sc = model.scalers
    n = len(samples)
    X = np.empty((n, cfg.input_dim))
    mu = np.empty(n)
    sigma = np.empty(n)
    y_case = np.empty((n, cfg.horizon))
    for i, w in enumerate(samples):
        if w.encoder_target.shape != (cfg.encoder_len,) or w.horizon_targets.shape != (cfg.horizon,):
            raise DimensionError(
                f"sample for unit {w.unit_id!r} has encoder/horizon lengths "
                f"{w.encoder_target.shape[0]}/{w.horizon_targets.shape[0]}, "
                f"model expects {cfg.encoder_len}/{cfg.horizon}"
            )
        if w.unit_id not in sc.unit_mean:
            raise MissingUnitError(f"unit {w.unit_id!r} has no training-period statistics in this model")
        m, s = sc.unit_mean[w.unit_id], sc.unit_sd[w.unit_id]
        mu[i], sigma[i] = m, s
        enc = (w.encoder_target - m) / s
        exog = (w.encoder_exog - sc.exog_mean) / sc.exog_sd if w.exog_present else np.zeros(cfg.encoder_len)
        statics = [float(w.exog_present), (math.log(w.population) - sc.logpop_mean) / sc.logpop_sd]
        parts = [enc, exog, np.array(statics)]
        if cfg.use_static_demographics:
            # Fractions are already on a bounded, comparable scale; feeding
            # them raw keeps a unit's influence on the demographic input
            # weights proportional to its actual group shares.
            parts.append(np.asarray(w.demo_fractions, dtype=float))
        X[i] = np.concatenate(parts)
        y_case[i] = w.horizon_targets
    return X, mu, sigma, y_case


def _forward_std(model: TrainedModel, X: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Forward pass in standardized space; returns activations and output."""
    acts = [X]
    h = X
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        h = np.tanh(h @ W + b)
        acts.append(h)
    out = h @ model.weights[-1] + model.biases[-1]
    return acts, out


def _head_out(model: TrainedModel, trunk: np.ndarray, label: str) -> np.ndarray:
    return trunk @ model.head_weights[label] + model.head_biases[label]


def forward(model: TrainedModel, samples: list[WindowSample]) -> list[QuantileForecast]:
    """Case-unit forecasts for a batch; one (H, |Q|) block per sample."""
    if not samples:
        return []
    cfg = model.config
    X, mu, sigma, _ = _assemble_features(model, samples)
    _, out = _forward_std(model, X)
    preds = mu[:, None, None] + sigma[:, None, None] * out.reshape(len(samples), cfg.horizon, len(cfg.quantiles))
    if cfg.sort_quantiles:
        preds = np.sort(preds, axis=-1)
    return [
        QuantileForecast(
            unit_id=w.unit_id,
            values=preds[i].copy(),
            lookaheads=w.lookaheads.copy(),
            first_target_date=w.first_target_date,
        )
        for i, w in enumerate(samples)
    ]


# ---------------------------------------------------------------------------
# Backpropagation
# ---------------------------------------------------------------------------

def _backward(model: TrainedModel, acts: list[np.ndarray], d_out: np.ndarray,
              head_grads: dict[str, tuple[np.ndarray, np.ndarray]] | None = None):
    """Gradients of a scalar wrt all parameters given d(scalar)/d(std output).

    head_grads maps label -> (row_indices, d_out_head) for group-head terms
    that also feed the shared trunk.
    """
    grads_w = [np.zeros_like(w) for w in model.weights]
    grads_b = [np.zeros_like(b) for b in model.biases]
    grads_hw = {k: np.zeros_like(w) for k, w in model.head_weights.items()}
    grads_hb = {k: np.zeros_like(b) for k, b in model.head_biases.items()}

    trunk = acts[-1]
    grads_w[-1] = trunk.T @ d_out
    grads_b[-1] = d_out.sum(axis=0)
    d_h = d_out @ model.weights[-1].T

    if head_grads:
        for label, (rows, d_head) in head_grads.items():
            grads_hw[label] = trunk[rows].T @ d_head
            grads_hb[label] = d_head.sum(axis=0)
            d_h_rows = d_head @ model.head_weights[label].T
            d_h[rows] += d_h_rows

    for layer in range(len(model.weights) - 2, -1, -1):
        d_z = d_h * (1.0 - acts[layer + 1] ** 2)  # tanh'
        grads_w[layer] = acts[layer].T @ d_z
        grads_b[layer] = d_z.sum(axis=0)
        d_h = d_z @ model.weights[layer].T
    return grads_w, grads_b, grads_hw, grads_hb


def _pinball_grad(quantiles: np.ndarray, y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    """d pinball / d y_pred, elementwise (subgradient at the kink)."""
    diff = y_true[..., None] - y_pred
    return np.where(diff >= 0.0, -quantiles, 1.0 - quantiles)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class BatchRecord:
    """Per-batch trace handed to callbacks and the gate log."""

    epoch: int
    batch: int
    base_losses: np.ndarray
    adjusted_losses: np.ndarray
    diagnostics: object
    gates: np.ndarray | None
    scalar_loss: float


def _batch_context(samples, lookaheads, losses, demo_rows, labels, residuals=None) -> BatchContext:
    return BatchContext(
        losses=losses,
        demo=demo_rows,
        lookaheads=lookaheads,
        majority_labels=labels,
        median_residuals=residuals,
    )


def train(
    train_windows: list[WindowSample],
    config: ModelConfig,
    method: DebiasMethod | None = None,
    on_batch=None,
) -> TrainedModel:
    """Mini-batch gradient-descent training with the chosen de-biasing method.

    Per batch: forward pass, per-row quantile-averaged case-unit losses, loss
    adjustment per the method, backpropagation through the (possibly
    reweighted) loss, and a plain gradient step. on_batch, when given, is
    called with a BatchRecord after every step.
    """
    if not train_windows:
        raise EmptyInputError("training requires at least one window sample")
    method = method or DebiasMethod()
    cfg = config
    quantiles = np.asarray(cfg.quantiles)
    n_q = len(cfg.quantiles)
    median_idx = int(np.argmin(np.abs(quantiles - 0.5)))

    scalers = fit_scalers(train_windows, cfg)
    model = init_model(cfg, scalers, method=method.variant)
    batch_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed).spawn(2)[1]))

    X_all, mu_all, sigma_all, y_all = _assemble_features(model, train_windows)
    labels_all = tuple(majority_label_from_fractions(w.demo_fractions) for w in train_windows)
    demo_all = np.stack([w.demo_fractions for w in train_windows])
    look_row = np.arange(1, cfg.horizon + 1, dtype=float)

    n = len(train_windows)
    for epoch in range(cfg.epochs):
        order = batch_rng.permutation(n)
        epoch_losses = []
        for batch_no, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            B = idx.shape[0]
            acts, out = _forward_std(model, X_all[idx])
            out3 = out.reshape(B, cfg.horizon, n_q)
            preds = mu_all[idx, None, None] + sigma_all[idx, None, None] * out3
            y_batch = y_all[idx]

            row_losses = pbl_avg_matrix(quantiles, y_batch, preds)  # (B, H)
            flat_losses = row_losses.reshape(-1)
            if not np.all(np.isfinite(flat_losses)):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {batch_no}", epoch=epoch, batch=batch_no
                )

            demo_rows = np.repeat(demo_all[idx], cfg.horizon, axis=0)
            look_rows = np.tile(look_row, B)
            label_rows = tuple(labels_all[i] for i in idx for _ in range(cfg.horizon))

            # d(row mean pinball)/d pred, before any method weighting
            base_grad = _pinball_grad(quantiles, y_batch, preds) / n_q  # (B, H, Q)
            n_rows = flat_losses.shape[0]

            diagnostics = None
            gates = None
            head_grads = None
            adjusted = flat_losses
            if method.variant == "none":
                scalar = float(flat_losses.mean())
                d_pred = base_grad / n_rows
            elif method.variant == "demopts":
                ctx = _batch_context(None, look_rows, flat_losses, demo_rows, label_rows)
                adjusted, diagnostics = demopts_adjust(ctx, method.p_threshold, method.compounding)
                if diagnostics is not None:
                    gates = diagnostics.p_values[:4] < method.p_threshold
                    mult = demopts_multiplier(diagnostics, demo_rows, method.p_threshold, method.compounding)
                else:
                    mult = np.ones(n_rows)
                scalar = float(adjusted.mean())
                d_pred = base_grad * mult.reshape(B, cfg.horizon)[:, :, None] / n_rows
            elif method.variant in ("individual", "group"):
                residuals = (preds[:, :, median_idx] - y_batch).reshape(-1)
                ctx = _batch_context(None, look_rows, flat_losses, demo_rows, label_rows, residuals)
                pen_fn = individual_residual_penalty if method.variant == "individual" else group_residual_penalty
                penalty, d_resid = pen_fn(ctx)
                scalar = float(flat_losses.mean() + method.penalty_weight * penalty)
                d_pred = base_grad / n_rows
                d_pred[:, :, median_idx] += method.penalty_weight * d_resid.reshape(B, cfg.horizon)
            elif method.variant == "sufficiency":
                trunk = acts[-1]
                gaps: dict[str, float] = {}
                head_grads = {}
                d_pred = base_grad / n_rows
                batch_labels = np.array([labels_all[i] for i in idx])
                present = sorted(set(batch_labels.tolist()))
                head_pin = 0.0
                for label in present:
                    rows = np.flatnonzero(batch_labels == label)
                    h_out = (_head_out(model, trunk[rows], label)).reshape(rows.shape[0], cfg.horizon, n_q)
                    h_preds = mu_all[idx[rows], None, None] + sigma_all[idx[rows], None, None] * h_out
                    gap_vec = preds[rows] - h_preds
                    gaps[label] = float((gap_vec ** 2).mean())
                    head_pin += float(pbl_avg_matrix(quantiles, y_batch[rows], h_preds).mean())
                    # head's own pinball on its rows + disagreement pull
                    head_pin_grad = _pinball_grad(quantiles, y_batch[rows], h_preds) / n_q
                    n_head_rows = rows.shape[0] * cfg.horizon
                    d_head_pred = head_pin_grad / (n_head_rows * len(present))
                    d_gap = 2.0 * gap_vec / gap_vec.size / len(present) * method.penalty_weight
                    d_head_pred -= d_gap
                    d_pred[rows] += d_gap
                    d_head_std = d_head_pred * sigma_all[idx[rows], None, None]
                    head_grads[label] = (rows, d_head_std.reshape(rows.shape[0], -1))
                head_pin /= len(present)
                scalar = sufficiency_penalty(float(flat_losses.mean()), gaps, method.penalty_weight) + head_pin
            else:  # pragma: no cover - guarded by DebiasMethod validation
                raise ConfigError(f"unhandled debias variant {method.variant!r}")

            if not math.isfinite(scalar):
                raise DivergenceError(
                    f"non-finite adjusted loss at epoch {epoch}, batch {batch_no}", epoch=epoch, batch=batch_no
                )

            d_out = (d_pred * sigma_all[idx, None, None]).reshape(B, cfg.horizon * n_q)
            grads_w, grads_b, grads_hw, grads_hb = _backward(model, acts, d_out, head_grads)
            lr = cfg.learning_rate
            for W, g in zip(model.weights, grads_w):
                W -= lr * g
            for b, g in zip(model.biases, grads_b):
                b -= lr * g
            if method.variant == "sufficiency":
                for label in model.head_weights:
                    model.head_weights[label] -= lr * grads_hw[label]
                    model.head_biases[label] -= lr * grads_hb[label]

            if not all(np.all(np.isfinite(w)) for w in model.weights):
                raise DivergenceError(
                    f"non-finite parameters after epoch {epoch}, batch {batch_no}", epoch=epoch, batch=batch_no
                )

            epoch_losses.append(float(flat_losses.mean()))
            if on_batch is not None:
                on_batch(BatchRecord(
                    epoch=epoch,
                    batch=batch_no,
                    base_losses=flat_losses.copy(),
                    adjusted_losses=np.asarray(adjusted).copy(),
                    diagnostics=diagnostics,
                    gates=None if gates is None else gates.copy(),
                    scalar_loss=scalar,
                ))
        if epoch_losses:
            model.loss_history.append(float(np.mean(epoch_losses)))
    return model


# ---------------------------------------------------------------------------
# Gradient check
# ---------------------------------------------------------------------------

def _sample_loss(model: TrainedModel, sample: WindowSample) -> float:
    X, mu, sigma, y_case = _assemble_features(model, [sample])
    _, out = _forward_std(model, X)
    preds = mu[:, None, None] + sigma[:, None, None] * out.reshape(1, model.config.horizon, len(model.config.quantiles))
    return float(pbl_avg_matrix(np.asarray(model.config.quantiles), y_case, preds).mean())


def gradient_check(model: TrainedModel, sample: WindowSample, epsilon: float = 1e-5) -> float:
    """Max relative difference between analytic and central finite-difference
    gradients of the averaged quantile loss, over all main parameters.

    Raises KinkError when any (lookahead, quantile) cell sits within
    10*epsilon of the pinball kink; re-seed the model or sample instead.
    """
    cfg = model.config
    quantiles = np.asarray(cfg.quantiles)
    n_q = len(cfg.quantiles)
    X, mu, sigma, y_case = _assemble_features(model, [sample])
    acts, out = _forward_std(model, X)
    preds = mu[:, None, None] + sigma[:, None, None] * out.reshape(1, cfg.horizon, n_q)
    if np.min(np.abs(y_case[:, :, None] - preds)) < 10.0 * epsilon:
        raise KinkError(
            "prediction within 10*epsilon of a pinball kink; re-seed the model or pick another sample"
        )

    n_rows = cfg.horizon
    d_pred = _pinball_grad(quantiles, y_case, preds) / n_q / n_rows
    d_out = (d_pred * sigma[:, None, None]).reshape(1, cfg.horizon * n_q)
    grads_w, grads_b, _, _ = _backward(model, acts, d_out)

    max_rel = 0.0
    for arr, grad in [*zip(model.weights, grads_w), *zip(model.biases, grads_b)]:
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = _sample_loss(model, sample)
            flat[i] = orig - epsilon
            down = _sample_loss(model, sample)
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            max_rel = max(max_rel, abs(gflat[i] - numeric) / denom)
    return max_rel
