"""Quantile (pinball) loss primitives and the population-normalized variant.

All functions are pure and operate on plain floats or numpy arrays; callers
decide the scale (standardized vs. case units) of the values they pass in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError


@dataclass(frozen=True)
class LossMatrix:
    """Per-(sample, lookahead) quantile-averaged losses aligned with demographics.

    One row per (sample, lookahead) pair:
      unit_ids[i]   -- owning unit key
      lookaheads[i] -- forecast step, 1-based
      pbl[i]        -- quantile-averaged pinball loss, >= 0
      demo[i, :]    -- the unit's 4 demographic fractions (asian, black, hispanic, white)
      population[i] -- the unit's population
    """

    unit_ids: tuple[str, ...]
    lookaheads: np.ndarray
    pbl: np.ndarray
    demo: np.ndarray
    population: np.ndarray

    def __post_init__(self):
        n = len(self.unit_ids)
        if not (self.lookaheads.shape == (n,) and self.pbl.shape == (n,)
                and self.demo.shape == (n, 4) and self.population.shape == (n,)):
            raise DimensionError(
                f"LossMatrix arrays misaligned: {n} rows expected, got "
                f"lookaheads {self.lookaheads.shape}, pbl {self.pbl.shape}, "
                f"demo {self.demo.shape}, population {self.population.shape}"
            )
        if np.any(self.pbl < 0):
            raise DomainError("LossMatrix pbl values must be non-negative")


def pinball(q: float, y_true: float, y_pred: float) -> float:
    """Pinball loss for a single quantile level q in (0, 1).

    q * (y_true - y_pred) when the truth is at or above the prediction,
    (q - 1) * (y_true - y_pred) otherwise. Always >= 0.
    """
    if not 0.0 < q < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {q}")
    diff = y_true - y_pred
    if diff >= 0.0:
        return q * diff
    return (q - 1.0) * diff


def pinball_matrix(quantiles: np.ndarray, y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    """Vectorized pinball loss.

    y_pred has one trailing axis of len(quantiles); y_true broadcasts against
    y_pred without that axis. Returns losses with y_pred's shape.
    """
    quantiles = np.asarray(quantiles, dtype=float)
    y_true = np.asarray(y_true, dtype=float)[..., None]
    y_pred = np.asarray(y_pred, dtype=float)
    if y_pred.shape[-1] != quantiles.shape[0]:
        raise DimensionError(
            f"last axis of y_pred ({y_pred.shape[-1]}) must match number of quantiles ({quantiles.shape[0]})"
        )
    diff = y_true - y_pred
    return np.where(diff >= 0.0, quantiles * diff, (quantiles - 1.0) * diff)


def pbl_avg(quantiles, y_true: float, y_preds) -> float:
    """Pinball loss averaged over quantile levels for one target value."""
    quantiles = np.asarray(quantiles, dtype=float)
    y_preds = np.asarray(y_preds, dtype=float)
    if quantiles.shape != y_preds.shape:
        raise DimensionError(
            f"got {y_preds.shape[0] if y_preds.ndim else 0} predictions for {quantiles.shape[0]} quantiles"
        )
    total = 0.0
    for q, y_pred in zip(quantiles, y_preds):
        total += pinball(float(q), y_true, float(y_pred))
    return total / len(quantiles)


def pbl_avg_matrix(quantiles: np.ndarray, y_true: np.ndarray, y_pred: np.ndarray) -> np.ndarray:
    """Quantile-averaged pinball loss over the trailing quantile axis."""
    return pinball_matrix(quantiles, y_true, y_pred).mean(axis=-1)


def norm_pbl(pbl: float, population: int) -> float:
    """Scale a loss to error cases per 1,000 population."""
    if population < 1:
        raise DomainError(f"population must be >= 1, got {population}")
    return 1000.0 * pbl / population
