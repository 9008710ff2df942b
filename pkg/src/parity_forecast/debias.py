"""Training-time de-biasing: significance-gated loss adjustment plus the
individual, group, and sufficiency comparison penalties.

The gated adjustment refits an OLS of per-row losses on demographic
fractions and lookahead inside every batch; demographic covariates whose
slope is significant (p below the threshold) contribute a multiplicative
loss penalty |beta| * fraction. Slopes and p-values are constants for
backpropagation: gradients flow only through the loss factor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, SampleSizeError, SingularDesignError
from .stats import RegressionDiagnostics, ols_fit

log = logging.getLogger(__name__)

VARIANTS = ("none", "demopts", "individual", "group", "sufficiency")

# OLS needs n > k + 1 with k = 4 demographics + lookahead.
MIN_BATCH_ROWS = 7


@dataclass(frozen=True)
class DebiasMethod:
    """Which de-biasing variant to attach to training, with its parameters."""

    variant: str = "none"
    p_threshold: float = 0.05    # demopts significance gate
    compounding: bool = False    # demopts: multiply penalties sequentially instead of summing
    penalty_weight: float = 1.0  # lambda for individual/group/sufficiency

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown debias variant {self.variant!r}; expected one of {VARIANTS}")
        if not 0.0 <= self.p_threshold < 1.0:
            raise ConfigError(f"p_threshold must lie in [0, 1), got {self.p_threshold}")
        if self.penalty_weight < 0.0:
            raise ConfigError(f"penalty_weight must be >= 0, got {self.penalty_weight}")


@dataclass(frozen=True)
class BatchContext:
    """Per-row view of one training batch, aligned by row index.

    Rows are (sample, lookahead) pairs. median_residuals holds the signed
    median-quantile error (prediction - truth) used by the individual and
    group penalties; it may be omitted for the gated adjustment.
    """

    losses: np.ndarray            # (n,) quantile-averaged, >= 0
    demo: np.ndarray              # (n, 4) demographic fractions
    lookaheads: np.ndarray        # (n,)
    majority_labels: tuple[str, ...]
    median_residuals: np.ndarray | None = None

    def __post_init__(self):
        n = self.losses.shape[0]
        if self.demo.shape != (n, 4) or self.lookaheads.shape != (n,) or len(self.majority_labels) != n:
            raise DimensionError("BatchContext rows misaligned")
        if self.median_residuals is not None and self.median_residuals.shape != (n,):
            raise DimensionError("median_residuals misaligned with batch rows")
        if np.any(self.losses < 0):
            raise DimensionError("batch losses must be non-negative")


def demopts_multiplier(
    diagnostics: RegressionDiagnostics,
    demo: np.ndarray,
    p_threshold: float,
    compounding: bool,
) -> np.ndarray:
    """Per-row loss multiplier implied by the significant demographic slopes."""
    gates = diagnostics.p_values[:4] < p_threshold
    if not compounding:
        return 1.0 + demo[:, gates] @ np.abs(diagnostics.coefficients[:4][gates])
    mult = np.ones(demo.shape[0])
    for j in np.flatnonzero(gates):
        mult *= 1.0 + abs(diagnostics.coefficients[j]) * demo[:, j]
    return mult


def demopts_adjust(
    ctx: BatchContext,
    p_threshold: float = 0.05,
    compounding: bool = False,
) -> tuple[np.ndarray, RegressionDiagnostics | None]:
    """Significance-gated loss adjustment for one batch.

    Fits losses ~ demographics + lookahead (+ intercept), then scales each
    row's loss by the gated multiplier. Falls back to the unadjusted losses
    when the fit is impossible (singular design or too few rows); training
    must not abort on a degenerate batch.
    """
    n = ctx.losses.shape[0]
    if n < MIN_BATCH_ROWS:
        log.warning("debias skipped: batch has %d rows, need >= %d for the loss regression", n, MIN_BATCH_ROWS)
        return ctx.losses.copy(), None
    X = np.column_stack([ctx.demo, ctx.lookaheads.astype(float)])
    try:
        diagnostics = ols_fit(X, ctx.losses)
    except (SingularDesignError, SampleSizeError) as exc:
        log.warning("debias skipped: %s", exc)
        return ctx.losses.copy(), None
    mult = demopts_multiplier(diagnostics, ctx.demo, p_threshold, compounding)
    return ctx.losses * mult, diagnostics


def _group_index(labels: tuple[str, ...]) -> dict[str, np.ndarray]:
    out: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        out.setdefault(lab, []).append(i)
    return {lab: np.array(idx) for lab, idx in out.items()}


def individual_residual_penalty(ctx: BatchContext) -> tuple[float, np.ndarray]:
    """Mean squared residual difference over cross-group sample pairs.

    Returns (penalty, d penalty / d residual). Zero when fewer than two
    distinct majority labels are present.
    """
    r = ctx.median_residuals
    if r is None:
        raise DimensionError("individual penalty needs median_residuals in the batch context")
    groups = _group_index(ctx.majority_labels)
    n = r.shape[0]
    if len(groups) < 2:
        return 0.0, np.zeros(n)

    s1, s2 = float(r.sum()), float((r * r).sum())
    total = n * s2 - s1 * s1  # sum of (ri - rj)^2 over all unordered pairs
    within = 0.0
    for idx in groups.values():
        rg = r[idx]
        within += idx.shape[0] * float((rg * rg).sum()) - float(rg.sum()) ** 2
    cross = total - within
    n_cross = (n * n - sum(idx.shape[0] ** 2 for idx in groups.values())) // 2
    penalty = cross / n_cross

    grad = np.zeros(n)
    for idx in groups.values():
        rg = r[idx]
        n_other = n - idx.shape[0]
        s1_other = s1 - float(rg.sum())
        grad[idx] = 2.0 * (n_other * rg - s1_other) / n_cross
    return penalty, grad


def individual_penalty(ctx: BatchContext, penalty_weight: float) -> float:
    """Mean loss plus the weighted cross-group pairwise residual penalty."""
    penalty, _ = individual_residual_penalty(ctx)
    return float(ctx.losses.mean() + penalty_weight * penalty)


def group_residual_penalty(ctx: BatchContext) -> tuple[float, np.ndarray]:
    """Mean squared difference of group-mean residuals over group pairs."""
    r = ctx.median_residuals
    if r is None:
        raise DimensionError("group penalty needs median_residuals in the batch context")
    groups = _group_index(ctx.majority_labels)
    n = r.shape[0]
    if len(groups) < 2:
        return 0.0, np.zeros(n)

    labels = sorted(groups)
    means = {lab: float(r[groups[lab]].mean()) for lab in labels}
    n_pairs = len(labels) * (len(labels) - 1) // 2
    penalty = 0.0
    for i, a in enumerate(labels):
        for b in labels[i + 1:]:
            penalty += (means[a] - means[b]) ** 2
    penalty /= n_pairs

    grad = np.zeros(n)
    for a in labels:
        idx = groups[a]
        coeff = sum(2.0 * (means[a] - means[b]) for b in labels if b != a) / n_pairs
        grad[idx] = coeff / idx.shape[0]
    return penalty, grad


def group_penalty(ctx: BatchContext, penalty_weight: float) -> float:
    """Mean loss plus the weighted group-mean residual disparity penalty."""
    penalty, _ = group_residual_penalty(ctx)
    return float(ctx.losses.mean() + penalty_weight * penalty)


def sufficiency_penalty(joint_loss: float, group_head_gaps: dict[str, float], penalty_weight: float) -> float:
    """Joint loss plus the weighted mean joint-vs-group-head disagreement.

    group_head_gaps maps each majority label present in the batch to the mean
    squared difference between the joint prediction and that group's head on
    the group's rows; absent groups are simply not in the mapping.
    """
    if not group_head_gaps:
        return float(joint_loss)
    return float(joint_loss + penalty_weight * np.mean(list(group_head_gaps.values())))
