"""Grouped panel ingestion, validation, and training/testing window construction.

CSV schemas (headers are mandatory, dates ISO-8601, one row per unit-date):
  cases.csv        unit_id,date,cases
  demographics.csv unit_id,population,frac_asian,frac_black,frac_hispanic,frac_white
  mobility.csv     unit_id,date,inflow

Floats are serialized with repr() so write -> read round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import (
    DomainError,
    EmptyInputError,
    GapError,
    ParseError,
    ReferentialError,
    SampleSizeError,
)

log = logging.getLogger(__name__)

DEMOGRAPHIC_FIELDS = ("frac_asian", "frac_black", "frac_hispanic", "frac_white")
DEMOGRAPHIC_LABELS = ("Asian", "Black", "Hispanic", "White")
FRACTION_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class UnitRecord:
    """Static per-unit attributes: population and demographic composition."""

    unit_id: str
    population: int
    demo_fractions: np.ndarray  # (4,) ordered (asian, black, hispanic, white)

    def __post_init__(self):
        if self.population < 1:
            raise DomainError(f"unit {self.unit_id!r}: population must be >= 1, got {self.population}")
        fr = self.demo_fractions
        if fr.shape != (4,):
            raise DomainError(f"unit {self.unit_id!r}: expected 4 demographic fractions, got {fr.shape}")
        if np.any(fr < 0.0) or np.any(fr > 1.0):
            raise DomainError(f"unit {self.unit_id!r}: demographic fractions must lie in [0, 1], got {fr}")
        if fr.sum() > 1.0 + FRACTION_SUM_TOLERANCE:
            raise DomainError(f"unit {self.unit_id!r}: demographic fractions sum to {fr.sum():.6f} > 1")


@dataclass(frozen=True)
class PanelSeries:
    """Daily series for one unit; dates are contiguous with no gaps."""

    unit_id: str
    dates: tuple[date, ...]
    target_raw: np.ndarray
    target_smoothed: np.ndarray
    exog: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.dates)
        if self.target_raw.shape != (n,) or self.target_smoothed.shape != (n,):
            raise DomainError(f"unit {self.unit_id!r}: series arrays must match the {n} dates")
        if self.exog is not None and self.exog.shape != (n,):
            raise DomainError(f"unit {self.unit_id!r}: exog length {self.exog.shape} != {n} dates")
        for prev, cur in zip(self.dates[:-1], self.dates[1:]):
            if cur - prev != timedelta(days=1):
                raise GapError(f"unit {self.unit_id!r}: date gap between {prev} and {cur}")


@dataclass(frozen=True)
class WindowSample:
    """One sliding-window training/testing sample for a unit."""

    unit_id: str
    encoder_target: np.ndarray   # (E,) smoothed targets
    encoder_exog: np.ndarray     # (E,) inflow, zeros when absent
    exog_present: bool
    horizon_targets: np.ndarray  # (H,) smoothed targets immediately after encoder
    lookaheads: np.ndarray       # (H,) ints 1..H
    demo_fractions: np.ndarray   # (4,)
    population: int
    first_target_date: date


@dataclass(frozen=True)
class GroupedPanel:
    """Immutable collection of unit records and their daily series."""

    units: dict[str, UnitRecord]
    series: dict[str, PanelSeries]

    def __post_init__(self):
        if set(self.units) != set(self.series):
            raise ReferentialError("GroupedPanel units and series keys differ")

    @property
    def unit_ids(self) -> list[str]:
        return sorted(self.units)

    @property
    def date_range(self) -> tuple[date, date]:
        lows = [s.dates[0] for s in self.series.values()]
        highs = [s.dates[-1] for s in self.series.values()]
        return min(lows), max(highs)


def majority_label_from_fractions(fractions) -> str:
    """Label of the largest demographic fraction; ties go to the first in
    (Asian, Black, Hispanic, White) order."""
    fractions = np.asarray(fractions, dtype=float)
    if fractions.shape != (4,):
        raise DomainError(f"expected 4 demographic fractions, got {fractions.shape}")
    return DEMOGRAPHIC_LABELS[int(np.argmax(fractions))]


def rolling_average(raw, window: int = 7) -> np.ndarray:
    """Trailing mean over the last `window` days, partial at the series start."""
    if window < 1:
        raise DomainError(f"window must be >= 1, got {window}")
    raw = np.asarray(raw, dtype=float)
    if raw.size == 0:
        raise EmptyInputError("rolling_average received an empty sequence")
    csum = np.concatenate([[0.0], np.cumsum(raw)])
    out = np.empty_like(raw)
    for t in range(raw.shape[0]):
        lo = max(0, t - window + 1)
        out[t] = (csum[t + 1] - csum[lo]) / (t + 1 - lo)
    return out


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _read_rows(path: Path, required: tuple[str, ...]) -> list[tuple[int, dict]]:
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise ParseError(f"{path}: cannot open ({exc})") from exc
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = []
        for row in reader:
            if any(row.get(c) is None for c in required):
                raise ParseError(f"{path}: line {reader.line_num}: wrong number of fields")
            rows.append((reader.line_num, row))
    return rows


def _parse_float(path: Path, line: int, column: str, text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"{path}: line {line}: non-numeric {column} value {text!r}") from exc


def _parse_date(path: Path, line: int, text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError as exc:
        raise ParseError(f"{path}: line {line}: bad ISO date {text!r}") from exc


def read_demographics(path) -> dict[str, UnitRecord]:
    """Parse a demographics CSV (schema: unit_id, population, frac_asian,
    frac_black, frac_hispanic, frac_white) into validated UnitRecords.

    Works for any file in this schema, e.g. a county census export with one
    row per county, not just panels generated by this package.
    """
    path = Path(path)
    required = ("unit_id", "population") + DEMOGRAPHIC_FIELDS
    units: dict[str, UnitRecord] = {}
    for line, row in _read_rows(path, required):
        unit_id = row["unit_id"]
        if unit_id in units:
            raise ParseError(f"{path}: line {line}: duplicate unit {unit_id!r}")
        pop_val = _parse_float(path, line, "population", row["population"])
        if pop_val != int(pop_val):
            raise ParseError(f"{path}: line {line}: population must be an integer, got {row['population']!r}")
        fractions = np.array([_parse_float(path, line, c, row[c]) for c in DEMOGRAPHIC_FIELDS])
        try:
            units[unit_id] = UnitRecord(unit_id=unit_id, population=int(pop_val), demo_fractions=fractions)
        except DomainError as exc:
            raise DomainError(f"{path}: line {line}: {exc}") from exc
    if not units:
        raise EmptyInputError(f"{path}: no demographic rows")
    return units


def _read_dated_values(path: Path, value_col: str, allow_negative: bool) -> dict[str, dict[date, float]]:
    per_unit: dict[str, dict[date, float]] = {}
    for line, row in _read_rows(path, ("unit_id", "date", value_col)):
        unit_id = row["unit_id"]
        day = _parse_date(path, line, row["date"])
        value = _parse_float(path, line, value_col, row[value_col])
        if not allow_negative and value < 0:
            raise DomainError(f"{path}: line {line}: negative {value_col} value {value}")
        bucket = per_unit.setdefault(unit_id, {})
        if day in bucket:
            raise ParseError(f"{path}: line {line}: duplicate date {day} for unit {unit_id!r}")
        bucket[day] = value
    if not per_unit:
        raise EmptyInputError(f"{path}: no data rows")
    return per_unit


def ingest_panel(cases_csv, demographics_csv, mobility_csv=None) -> GroupedPanel:
    """Load and validate the three-file panel into a GroupedPanel.

    Dates per unit must be contiguous daily steps; the 7-day trailing average
    is computed here. Units absent from mobility get exog=None.
    """
    cases_csv, demographics_csv = Path(cases_csv), Path(demographics_csv)
    if not demographics_csv.exists():
        raise ReferentialError(
            f"{demographics_csv}: demographics file is required to resolve the units in {cases_csv}"
        )
    units = read_demographics(demographics_csv)
    cases = _read_dated_values(cases_csv, "cases", allow_negative=False)

    missing = sorted(set(cases) - set(units))
    if missing:
        raise ReferentialError(
            f"unit(s) {', '.join(missing)} present in {cases_csv} but not in {demographics_csv}"
        )

    mobility: dict[str, dict[date, float]] = {}
    if mobility_csv is not None:
        mobility = _read_dated_values(Path(mobility_csv), "inflow", allow_negative=True)

    series: dict[str, PanelSeries] = {}
    for unit_id in sorted(cases):
        by_date = cases[unit_id]
        days = sorted(by_date)
        for prev, cur in zip(days[:-1], days[1:]):
            if cur - prev != timedelta(days=1):
                raise GapError(
                    f"{cases_csv}: unit {unit_id!r}: missing day(s) between {prev} and {cur}"
                )
        raw = np.array([by_date[d] for d in days])
        exog = None
        if unit_id in mobility:
            mob = mobility[unit_id]
            absent = [d for d in days if d not in mob]
            if absent:
                raise GapError(
                    f"mobility for unit {unit_id!r} missing {len(absent)} day(s), first {absent[0]}"
                )
            exog = np.array([mob[d] for d in days])
        series[unit_id] = PanelSeries(
            unit_id=unit_id,
            dates=tuple(days),
            target_raw=raw,
            target_smoothed=rolling_average(raw, 7),
            exog=exog,
        )

    kept_units = {uid: units[uid] for uid in series}
    dropped = sorted(set(units) - set(series))
    if dropped:
        log.debug("demographics-only units without case data ignored: %s", ", ".join(dropped))
    return GroupedPanel(units=kept_units, series=series)


def write_panel_csvs(panel: GroupedPanel, out_dir) -> dict[str, Path]:
    """Write cases/demographics/mobility CSVs; floats use repr() for exact round-trips."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "cases": out_dir / "cases.csv",
        "demographics": out_dir / "demographics.csv",
        "mobility": out_dir / "mobility.csv",
    }

    with open(paths["cases"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "date", "cases"])
        for uid in panel.unit_ids:
            s = panel.series[uid]
            for d, v in zip(s.dates, s.target_raw):
                writer.writerow([uid, d.isoformat(), repr(float(v))])

    with open(paths["demographics"], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "population"] + list(DEMOGRAPHIC_FIELDS))
        for uid in panel.unit_ids:
            u = panel.units[uid]
            writer.writerow([uid, u.population] + [repr(float(f)) for f in u.demo_fractions])

    any_mobility = any(panel.series[uid].exog is not None for uid in panel.unit_ids)
    if any_mobility:
        with open(paths["mobility"], "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["unit_id", "date", "inflow"])
            for uid in panel.unit_ids:
                s = panel.series[uid]
                if s.exog is None:
                    continue
                for d, v in zip(s.dates, s.exog):
                    writer.writerow([uid, d.isoformat(), repr(float(v))])
    else:
        paths.pop("mobility")
    return paths


# ---------------------------------------------------------------------------
# Window construction
# ---------------------------------------------------------------------------

def make_windows(
    panel: GroupedPanel,
    encoder_len: int,
    horizon: int,
    split_date: date,
) -> tuple[list[WindowSample], list[WindowSample]]:
    """Slide daily windows over every unit and split them around split_date.

    Training windows have every horizon target strictly before split_date;
    test windows have every horizon target on/after it. Windows straddling
    the split are dropped, so no training target can leak into the test span.
    """
    if encoder_len < 1 or horizon < 1:
        raise DomainError(f"encoder_len and horizon must be >= 1, got {encoder_len}, {horizon}")
    lo, hi = panel.date_range
    if not (lo < split_date <= hi):
        raise DomainError(f"split_date {split_date} outside panel date range [{lo}, {hi}]")

    train: list[WindowSample] = []
    test: list[WindowSample] = []
    excluded = []
    lookaheads = np.arange(1, horizon + 1)
    for uid in panel.unit_ids:
        s = panel.series[uid]
        u = panel.units[uid]
        n = len(s.dates)
        if n < encoder_len + horizon:
            excluded.append(uid)
            continue
        exog_present = s.exog is not None
        exog = s.exog if exog_present else np.zeros(n)
        for start in range(0, n - encoder_len - horizon + 1):
            first_target = s.dates[start + encoder_len]
            last_target = s.dates[start + encoder_len + horizon - 1]
            if last_target < split_date:
                dest = train
            elif first_target >= split_date:
                dest = test
            else:
                continue
            dest.append(WindowSample(
                unit_id=uid,
                encoder_target=s.target_smoothed[start:start + encoder_len].copy(),
                encoder_exog=exog[start:start + encoder_len].copy(),
                exog_present=exog_present,
                horizon_targets=s.target_smoothed[start + encoder_len:start + encoder_len + horizon].copy(),
                lookaheads=lookaheads.copy(),
                demo_fractions=u.demo_fractions.copy(),
                population=u.population,
                first_target_date=first_target,
            ))

    for uid in excluded:
        log.warning("unit %r excluded: series shorter than encoder_len + horizon = %d",
                    uid, encoder_len + horizon)
    if excluded and len(excluded) == len(panel.unit_ids):
        raise SampleSizeError("every unit is too short for the requested encoder_len + horizon")
    if not train:
        raise SampleSizeError("no training windows before the split date")
    return train, test
