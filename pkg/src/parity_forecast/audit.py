"""Two-step error-parity evaluation over grouped forecast errors.

Step 1 labels every unit with its majority demographic group (White-majority
units form the unprotected reference). Step 2 tests hard parity with a
one-way ANOVA plus Tukey HSD over the per-unit mean normalized losses, and
soft parity with the accuracy equity ratio AER = mean(protected group) /
mean(White), reported as the distance |1 - AER|.

Each unit contributes exactly one value to its group's distribution: the
mean quantile-averaged pinball loss over its test windows, normalized to
errors per 1,000 population. Pooling raw per-window losses instead would
inflate the sample sizes and manufacture significance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateGroupError, DimensionError, EmptyInputError, MissingUnitError
from .forecaster import QuantileForecast
from .loss import norm_pbl, pbl_avg_matrix
from .panel import DEMOGRAPHIC_LABELS, UnitRecord, WindowSample, majority_label_from_fractions
from .stats import AnovaResult, TukeyPair, one_way_anova, tukey_hsd

PROTECTED_LABELS = tuple(lab for lab in DEMOGRAPHIC_LABELS if lab != "White")
SIGNIFICANCE_LEVELS = (0.01, 0.1)


@dataclass(frozen=True)
class MajorityLabel:
    unit_id: str
    label: str
    protected: bool


@dataclass(frozen=True)
class UnitErrorSummary:
    """One unit's test-window error figures."""

    unit_id: str
    label: str
    population: int
    mean_pbl: float
    mean_norm_pbl: float


@dataclass(frozen=True)
class ParityReport:
    method: str
    anova: AnovaResult
    tukey: tuple[TukeyPair, ...]
    per_group_mean_norm_pbl: dict[str, float]
    aer: dict[str, float]
    distance: dict[str, float]
    per_group_mean_pbl: dict[str, float]
    config_hash: str = ""
    seed: int = 0


def majority_label(unit: UnitRecord) -> MajorityLabel:
    """Arg-max demographic label; ties break in the fixed label order."""
    label = majority_label_from_fractions(unit.demo_fractions)
    return MajorityLabel(unit_id=unit.unit_id, label=label, protected=label != "White")


def unit_error_summaries(
    forecasts: Sequence[QuantileForecast],
    samples: Sequence[WindowSample],
    quantiles: Sequence[float],
    expected_units: Sequence[str] | None = None,
) -> list[UnitErrorSummary]:
    """Per-unit mean (and normalized mean) pinball loss over test windows.

    forecasts[i] must be the prediction for samples[i]. When expected_units
    is given, every listed unit must appear in the forecasts.
    """
    if len(forecasts) != len(samples):
        raise DimensionError(f"{len(forecasts)} forecasts paired with {len(samples)} samples")
    if not forecasts:
        raise EmptyInputError("no test forecasts to aggregate")
    qs = np.asarray(quantiles, dtype=float)

    rows_by_unit: dict[str, list[np.ndarray]] = {}
    labels: dict[str, str] = {}
    pops: dict[str, int] = {}
    for fc, w in zip(forecasts, samples):
        if fc.unit_id != w.unit_id:
            raise DimensionError(f"forecast unit {fc.unit_id!r} paired with sample unit {w.unit_id!r}")
        row = pbl_avg_matrix(qs, w.horizon_targets[None, :], fc.values[None, :, :])[0]
        rows_by_unit.setdefault(w.unit_id, []).append(row)
        labels[w.unit_id] = majority_label_from_fractions(w.demo_fractions)
        pops[w.unit_id] = int(w.population)

    if expected_units is not None:
        missing = sorted(set(expected_units) - set(rows_by_unit))
        if missing:
            raise MissingUnitError(f"no forecasts for units: {', '.join(missing)}")

    out = []
    for uid in sorted(rows_by_unit):
        mean_pbl = float(np.concatenate(rows_by_unit[uid]).mean())
        out.append(UnitErrorSummary(
            unit_id=uid,
            label=labels[uid],
            population=pops[uid],
            mean_pbl=mean_pbl,
            mean_norm_pbl=float(norm_pbl(np.array(mean_pbl), pops[uid])),
        ))
    return out


def group_norm_errors(summaries: Sequence[UnitErrorSummary]) -> dict[str, np.ndarray]:
    """Label -> per-unit mean normalized losses, labels in fixed order."""
    grouped: dict[str, list[float]] = {}
    for s in summaries:
        grouped.setdefault(s.label, []).append(s.mean_norm_pbl)
    return {lab: np.array(grouped[lab]) for lab in DEMOGRAPHIC_LABELS if lab in grouped}


def group_pbl_errors(summaries: Sequence[UnitErrorSummary]) -> dict[str, np.ndarray]:
    grouped: dict[str, list[float]] = {}
    for s in summaries:
        grouped.setdefault(s.label, []).append(s.mean_pbl)
    return {lab: np.array(grouped[lab]) for lab in DEMOGRAPHIC_LABELS if lab in grouped}


def hard_parity(grouped: dict[str, np.ndarray]) -> tuple[AnovaResult, tuple[TukeyPair, ...]]:
    """One-way ANOVA plus Tukey HSD over the group distributions, with
    pairwise significance flags at 0.01 and 0.1."""
    ordered = {lab: np.asarray(grouped[lab], dtype=float) for lab in sorted(grouped)}
    anova = one_way_anova(ordered)
    pairs = tuple(tukey_hsd(ordered, alpha_levels=SIGNIFICANCE_LEVELS))
    return anova, pairs


def soft_parity(grouped: dict[str, np.ndarray]) -> tuple[dict[str, float], dict[str, float]]:
    """AER per protected label against the White reference, and |1 - AER|."""
    if "White" not in grouped or len(grouped["White"]) == 0:
        raise DegenerateGroupError("soft parity requires a non-empty White reference group")
    white_mean = float(np.mean(grouped["White"]))
    if white_mean == 0.0:
        raise DegenerateGroupError("White reference group has zero mean normalized loss")
    aer, distance = {}, {}
    for lab in PROTECTED_LABELS:
        if lab in grouped and len(grouped[lab]) > 0:
            ratio = float(np.mean(grouped[lab])) / white_mean
            aer[lab] = ratio
            distance[lab] = abs(1.0 - ratio)
    return aer, distance


def build_report(
    summaries: Sequence[UnitErrorSummary],
    method: str,
    config_hash: str = "",
    seed: int = 0,
) -> ParityReport:
    grouped = group_norm_errors(summaries)
    anova, tukey = hard_parity(grouped)
    aer, distance = soft_parity(grouped)
    grouped_pbl = group_pbl_errors(summaries)
    return ParityReport(
        method=method,
        anova=anova,
        tukey=tukey,
        per_group_mean_norm_pbl={lab: float(np.mean(v)) for lab, v in grouped.items()},
        aer=aer,
        distance=distance,
        per_group_mean_pbl={lab: float(np.mean(v)) for lab, v in grouped_pbl.items()},
        config_hash=config_hash,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def _sig_mark(pair: TukeyPair) -> str:
    if pair.significant_01:
        return "**"
    if pair.significant_10:
        return "*"
    return ""


def _report_json_dict(report: ParityReport) -> dict:
    return {
        "method": report.method,
        "anova": {
            "f_stat": report.anova.f_stat,
            "df_between": report.anova.df_between,
            "df_within": report.anova.df_within,
            "p_value": report.anova.p_value,
        },
        "tukey_pairs": [
            {
                "group1": p.group1,
                "group2": p.group2,
                "mean_diff": p.mean_diff,
                "p_adj": p.p_adj,
                "significant_01": p.significant_01,
                "significant_10": p.significant_10,
            }
            for p in report.tukey
        ],
        "aer": dict(sorted(report.aer.items())),
        "distance": dict(sorted(report.distance.items())),
        "mean_pbl_per_group": dict(sorted(report.per_group_mean_pbl.items())),
        "config_hash": report.config_hash,
        "seed": report.seed,
    }


def emit_report(reports: Sequence[ParityReport], out_dir) -> list[Path]:
    """Write one report.json per method plus four combined CSV tables.

    Outputs are byte-identical across re-runs on identical inputs: fixed
    row/column orders, repr-format floats, no timestamps.
    """
    if not reports:
        raise EmptyInputError("emit_report needs at least one audited method")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    for rep in reports:
        method_dir = out / rep.method
        method_dir.mkdir(parents=True, exist_ok=True)
        path = method_dir / "report.json"
        path.write_text(json.dumps(_report_json_dict(rep), indent=1) + "\n")
        written.append(path)

    methods = [r.method for r in reports]

    lines = ["method,f_stat,df_between,df_within,p_value"]
    for r in reports:
        a = r.anova
        lines.append(f"{r.method},{a.f_stat!r},{a.df_between},{a.df_within},{a.p_value!r}")
    anova_path = out / "anova.csv"
    anova_path.write_text("\n".join(lines) + "\n")
    written.append(anova_path)

    pair_keys = sorted({(p.group1, p.group2) for r in reports for p in r.tukey})
    header = ["group1", "group2"]
    for m in methods:
        header += [f"mean_diff_{m}", f"p_adj_{m}", f"sig_{m}"]
    lines = [",".join(header)]
    by_method = [{(p.group1, p.group2): p for p in r.tukey} for r in reports]
    for g1, g2 in pair_keys:
        row = [g1, g2]
        for pairs in by_method:
            p = pairs.get((g1, g2))
            if p is None:
                row += ["", "", ""]
            else:
                row += [repr(p.mean_diff), repr(p.p_adj), _sig_mark(p)]
        lines.append(",".join(row))
    tukey_path = out / "tukey.csv"
    tukey_path.write_text("\n".join(lines) + "\n")
    written.append(tukey_path)

    lines = ["method,group,aer,distance"]
    for r in reports:
        for lab in PROTECTED_LABELS:
            if lab in r.aer:
                lines.append(f"{r.method},{lab},{r.aer[lab]!r},{r.distance[lab]!r}")
    soft_path = out / "soft_parity.csv"
    soft_path.write_text("\n".join(lines) + "\n")
    written.append(soft_path)

    lines = ["method,group,mean_pbl"]
    for r in reports:
        for lab in DEMOGRAPHIC_LABELS:
            if lab in r.per_group_mean_pbl:
                lines.append(f"{r.method},{lab},{r.per_group_mean_pbl[lab]!r}")
    pbl_path = out / "mean_pbl.csv"
    pbl_path.write_text("\n".join(lines) + "\n")
    written.append(pbl_path)

    return written
