"""Synthetic grouped panels with controllable group-correlated reporting bias.

All randomness comes from numpy's PCG64 generator seeded with the config
seed; draws happen in a fixed, documented order (per unit: demographic
fractions, population, wave phase, then the mobility and noise series), so a
given config reproduces the same panel on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .errors import ConfigError
from .panel import GroupedPanel, PanelSeries, UnitRecord, rolling_average

START_DATE = date(2020, 3, 1)
# Mid-sized county populations.  The range is kept fairly tight so that
# cross-unit loss magnitudes stay comparable; population is a pure nuisance
# scale in the loss-on-demographics regression and a wide spread drowns the
# reporting-bias signal that the de-biasing adjustment has to detect.
POPULATION_RANGE = (45_000, 55_000)
MOBILITY_RHO = 0.9
MOBILITY_SHOCK_SD = 0.3


@dataclass(frozen=True)
class EpidemicParams:
    base_rate: float = 1.0            # mean daily cases per 1,000 population
    wave_amplitude: float = 0.35      # relative seasonal swing
    wave_period_days: float = 28.0
    noise_sd: float = 0.10            # relative day-to-day noise


@dataclass(frozen=True)
class SynthConfig:
    n_units: int = 40
    n_days: int = 120
    seed: int = 0
    epidemic: EpidemicParams = field(default_factory=EpidemicParams)
    # Under-report coefficients, ordered (asian, black, hispanic, white).
    underreport: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    mobility_coupling: float = 0.15

    def __post_init__(self):
        if self.n_units < 4:
            raise ConfigError(f"n_units must be >= 4 so every group can hold a majority, got {self.n_units}")
        if self.n_days < 1:
            raise ConfigError(f"n_days must be >= 1, got {self.n_days}")
        if len(self.underreport) != 4 or any(not 0.0 <= u < 1.0 for u in self.underreport):
            raise ConfigError(f"underreport coefficients must be 4 values in [0, 1), got {self.underreport}")
        ep = self.epidemic
        if ep.base_rate <= 0 or ep.wave_period_days <= 0 or ep.wave_amplitude < 0 or ep.noise_sd < 0:
            raise ConfigError(f"invalid epidemic parameters: {ep}")


def reporting_factor(underreport, demo_fractions) -> float:
    """Fraction of latent cases that get reported for a unit's composition."""
    u = np.asarray(underreport, dtype=float)
    fr = np.asarray(demo_fractions, dtype=float)
    return float(1.0 - (u * fr).sum())


def generate(config: SynthConfig) -> GroupedPanel:
    """Deterministically generate a panel whose reported cases under-count
    latent cases in proportion to each unit's demographic mix."""
    rng = np.random.Generator(np.random.PCG64(config.seed))
    ep = config.epidemic
    n_days = config.n_days
    days = tuple(START_DATE + timedelta(days=t) for t in range(n_days))
    t_axis = np.arange(n_days, dtype=float)

    units: dict[str, UnitRecord] = {}
    series: dict[str, PanelSeries] = {}
    for i in range(config.n_units):
        unit_id = f"unit{i:03d}"
        majority = i % 4  # cycles through (asian, black, hispanic, white)

        dominant = rng.uniform(0.45, 0.85)
        others = rng.uniform(0.2, 1.0, size=3)
        # Leave 0-30% of each unit unlisted.  The spread in the listed total
        # keeps the four fractions from summing to a near-constant, which
        # would make them collinear with an intercept and blow up the
        # variance of per-group slope estimates in loss regressions.
        total = rng.uniform(0.70, 1.00)
        others = others / others.sum() * max(total - dominant, 0.05)
        fractions = np.empty(4)
        fractions[majority] = dominant
        fractions[[j for j in range(4) if j != majority]] = others

        population = int(rng.integers(POPULATION_RANGE[0], POPULATION_RANGE[1] + 1))
        phase = rng.uniform(0.0, ep.wave_period_days)

        shocks = rng.normal(0.0, MOBILITY_SHOCK_SD, size=n_days)
        mobility = np.empty(n_days)
        level = 0.0
        for t in range(n_days):
            level = MOBILITY_RHO * level + shocks[t]
            mobility[t] = level

        noise = rng.normal(0.0, ep.noise_sd, size=n_days)
        mean_daily = ep.base_rate * population / 1000.0
        wave = 1.0 + ep.wave_amplitude * np.sin(2.0 * np.pi * (t_axis + phase) / ep.wave_period_days)
        latent = mean_daily * np.maximum(0.0, wave + config.mobility_coupling * mobility + noise)
        reported = np.maximum(0.0, latent * reporting_factor(config.underreport, fractions))

        units[unit_id] = UnitRecord(unit_id=unit_id, population=population, demo_fractions=fractions)
        series[unit_id] = PanelSeries(
            unit_id=unit_id,
            dates=days,
            target_raw=reported,
            target_smoothed=rolling_average(reported, 7),
            exog=mobility,
        )
    return GroupedPanel(units=units, series=series)
