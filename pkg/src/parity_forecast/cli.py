"""Command-line front end: synthetic panel generation, training, parity
auditing, and report rendering.

Configuration is a flat key-value text file (`key = value`, `#` comments)
so experiment configs diff cleanly. Unknown keys are rejected by name.
Every command echoes the fully resolved config and a run-metadata file into
its output directory; re-running any command with the same config and seed
produces byte-identical outputs.

Exit status is 0 on success. On failure the process prints one
machine-parsable line to stderr, `<category>: <message>`, and exits 1.
The PARITY_FORECAST_LOG environment variable sets log verbosity
(DEBUG, INFO, WARNING, ERROR).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

from . import __version__
from .audit import ParityReport, build_report, emit_report, unit_error_summaries
from .debias import VARIANTS, DebiasMethod
from .errors import ConfigError, ParityForecastError, ParseError
from .forecaster import DEFAULT_QUANTILES, ModelConfig, TrainedModel, forward, train
from .panel import ingest_panel, make_windows, write_panel_csvs
from .stats import AnovaResult, TukeyPair
from .synth import EpidemicParams, SynthConfig, generate

log = logging.getLogger(__name__)

VERSION_STRING = f"parity-forecast-{__version__}"

DEMO_COVARIATES = ("frac_asian", "frac_black", "frac_hispanic", "frac_white")
LOG_HEADER = "epoch,batch,covariate,beta,p_value,gate_fired"


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected true/false, got {raw!r}")


def _parse_floats(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.split(",") if tok.strip())


def _parse_ints(raw: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in raw.split(",") if tok.strip())


def _parse_date_opt(raw: str):
    raw = raw.strip()
    return date.fromisoformat(raw) if raw else None


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


# key -> (parser, default); registry order defines the canonical echo order
CONFIG_KEYS = {
    "n_units": (int, 40),
    "n_days": (int, 120),
    "seed": (int, 0),
    "base_rate": (float, 1.0),
    "wave_amplitude": (float, 0.35),
    "wave_period_days": (float, 28.0),
    "noise_sd": (float, 0.10),
    "u_asian": (float, 0.0),
    "u_black": (float, 0.0),
    "u_hispanic": (float, 0.0),
    "u_white": (float, 0.0),
    "mobility_coupling": (float, 0.15),
    "encoder_len": (int, 21),
    "horizon": (int, 7),
    "quantiles": (_parse_floats, DEFAULT_QUANTILES),
    "hidden_sizes": (_parse_ints, (32,)),
    "learning_rate": (float, 0.02),
    "batch_size": (int, 64),
    "epochs": (int, 60),
    "method": (str, "none"),
    "p_threshold": (float, 0.05),
    "compounding": (_parse_bool, False),
    "penalty_weight": (float, 1.0),
    "use_static_demographics": (_parse_bool, True),
    "sort_quantiles": (_parse_bool, False),
    "split_date": (_parse_date_opt, None),
    "test_days": (int, 21),
    "data_dir": (str, "."),
    "out_dir": (str, "runs"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name)

    def canonical_text(self) -> str:
        lines = [f"{key} = {_fmt(self.values[key])}" for key in CONFIG_KEYS]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        # out_dir does not affect any computed value, so moving a run
        # directory must not change the experiment's identity
        lines = [f"{key} = {_fmt(self.values[key])}" for key in CONFIG_KEYS if key != "out_dir"]
        return hashlib.sha256(("\n".join(lines) + "\n").encode()).hexdigest()

    def synth_config(self) -> SynthConfig:
        v = self.values
        return SynthConfig(
            n_units=v["n_units"],
            n_days=v["n_days"],
            seed=v["seed"],
            epidemic=EpidemicParams(
                base_rate=v["base_rate"],
                wave_amplitude=v["wave_amplitude"],
                wave_period_days=v["wave_period_days"],
                noise_sd=v["noise_sd"],
            ),
            underreport=(v["u_asian"], v["u_black"], v["u_hispanic"], v["u_white"]),
            mobility_coupling=v["mobility_coupling"],
        )

    def model_config(self) -> ModelConfig:
        v = self.values
        return ModelConfig(
            encoder_len=v["encoder_len"],
            horizon=v["horizon"],
            quantiles=v["quantiles"],
            hidden_sizes=v["hidden_sizes"],
            learning_rate=v["learning_rate"],
            batch_size=v["batch_size"],
            epochs=v["epochs"],
            seed=v["seed"],
            use_static_demographics=v["use_static_demographics"],
            sort_quantiles=v["sort_quantiles"],
        )

    def debias_method(self, override: str | None = None) -> DebiasMethod:
        v = self.values
        variant = override if override is not None else v["method"]
        if variant not in VARIANTS:
            raise ConfigError(f"unknown method {variant!r}; expected one of {', '.join(VARIANTS)}")
        return DebiasMethod(
            variant=variant,
            p_threshold=v["p_threshold"],
            compounding=v["compounding"],
            penalty_weight=v["penalty_weight"],
        )

    def resolve_split(self, date_lo: date, date_hi: date) -> date:
        if self.values["split_date"] is not None:
            return self.values["split_date"]
        test_days = self.values["test_days"]
        if test_days < 1:
            raise ConfigError(f"test_days must be >= 1, got {test_days}")
        return date_hi - timedelta(days=test_days - 1)


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    """Parse the flat key-value config file; unknown or duplicate keys are
    rejected by name. A missing path yields the all-defaults config."""
    values = {key: default for key, (_, default) in CONFIG_KEYS.items()}
    if path is not None:
        text = Path(path).read_text()
        seen = set()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate config key {key!r}")
            seen.add(key)
            parser, _ = CONFIG_KEYS[key]
            try:
                values[key] = parser(val.strip())
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    return ExperimentConfig(values=values)


def _write_run_meta(config: ExperimentConfig, out_dir: Path, command: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config_resolved.txt").write_text(config.canonical_text())
    meta = {
        "version": VERSION_STRING,
        "command": command,
        "seed": config.values["seed"],
        "config_hash": config.config_hash(),
    }
    (out_dir / "run_meta.json").write_text(json.dumps(meta, indent=1) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    config = load_config(args.config, {"seed": args.seed, "out_dir": args.out})
    out_dir = Path(config.values["out_dir"])
    panel = generate(config.synth_config())
    _write_run_meta(config, out_dir, "synth")
    paths = write_panel_csvs(panel, out_dir)
    log.info("wrote %d panel files to %s", len(paths), out_dir)
    return 0


def _load_panel(config: ExperimentConfig):
    data_dir = Path(config.values["data_dir"])
    mobility = data_dir / "mobility.csv"
    return ingest_panel(
        data_dir / "cases.csv",
        data_dir / "demographics.csv",
        mobility if mobility.exists() else None,
    )


def _log_rows_for_batch(record) -> list[str]:
    diag = record.diagnostics
    if diag is None:
        return []
    rows = []
    for j, name in enumerate(DEMO_COVARIATES):
        fired = bool(record.gates[j]) if record.gates is not None else False
        rows.append(
            f"{record.epoch},{record.batch},{name},{float(diag.coefficients[j])!r},"
            f"{float(diag.p_values[j])!r},{str(fired).lower()}"
        )
    rows.append(
        f"{record.epoch},{record.batch},lookahead,{float(diag.coefficients[4])!r},"
        f"{float(diag.p_values[4])!r},false"
    )
    return rows


def cmd_train(args) -> int:
    config = load_config(args.config, {"seed": args.seed, "out_dir": args.out})
    out_dir = Path(config.values["out_dir"])
    method = config.debias_method(args.method)
    panel = _load_panel(config)
    lo, hi = panel.date_range
    split = config.resolve_split(lo, hi)
    model_config = config.model_config()
    train_w, test_w = make_windows(panel, model_config.encoder_len, model_config.horizon, split)
    log.info("training on %d windows (%d held out) with method %s", len(train_w), len(test_w), method.variant)

    log_lines = [LOG_HEADER]

    def on_batch(record):
        log_lines.extend(_log_rows_for_batch(record))

    model = train(train_w, model_config, method, on_batch=on_batch)
    _write_run_meta(config, out_dir, "train")
    model.save(out_dir / "checkpoint.json")
    (out_dir / "training_log.csv").write_text("\n".join(log_lines) + "\n")
    return 0


def _audit_checkpoint(path: str, panel, split, config: ExperimentConfig) -> ParityReport:
    model = TrainedModel.load(path)
    cfg = model.config
    _, test_w = make_windows(panel, cfg.encoder_len, cfg.horizon, split)
    forecasts = forward(model, test_w)
    summaries = unit_error_summaries(
        forecasts, test_w, cfg.quantiles,
        expected_units=sorted({w.unit_id for w in test_w}),
    )
    return build_report(
        summaries,
        method=model.method,
        config_hash=config.config_hash(),
        seed=model.seed,
    )


def cmd_audit(args) -> int:
    config = load_config(args.config, {"seed": args.seed, "out_dir": args.out})
    out_dir = Path(config.values["out_dir"])
    panel = _load_panel(config)
    lo, hi = panel.date_range
    split = config.resolve_split(lo, hi)
    reports = [_audit_checkpoint(p, panel, split, config) for p in args.checkpoints]
    _write_run_meta(config, out_dir, "audit")
    emit_report(reports, out_dir)
    return 0


def _report_from_json(path: str) -> ParityReport:
    payload = json.loads(Path(path).read_text())
    try:
        anova = AnovaResult(
            f_stat=payload["anova"]["f_stat"],
            df_between=payload["anova"]["df_between"],
            df_within=payload["anova"]["df_within"],
            p_value=payload["anova"]["p_value"],
        )
        tukey = tuple(
            TukeyPair(
                group1=p["group1"],
                group2=p["group2"],
                mean_diff=p["mean_diff"],
                p_adj=p["p_adj"],
                significant_01=p["significant_01"],
                significant_10=p["significant_10"],
            )
            for p in payload["tukey_pairs"]
        )
        aer = dict(payload["aer"])
        return ParityReport(
            method=payload["method"],
            anova=anova,
            tukey=tukey,
            per_group_mean_norm_pbl={},
            aer=aer,
            distance=dict(payload["distance"]),
            per_group_mean_pbl=dict(payload["mean_pbl_per_group"]),
            config_hash=payload["config_hash"],
            seed=payload["seed"],
        )
    except KeyError as exc:
        raise ParseError(f"{path}: missing report field {exc}") from exc


def cmd_report(args) -> int:
    config = load_config(args.config, {"seed": args.seed, "out_dir": args.out})
    out_dir = Path(config.values["out_dir"])
    reports = [_report_from_json(p) for p in args.reports]
    _write_run_meta(config, out_dir, "report")
    emit_report(reports, out_dir)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parity-forecast",
        description="Grouped-panel quantile forecasting with training-time "
                    "de-biasing and error-parity audits.",
    )
    parser.add_argument("--version", action="version", version=VERSION_STRING)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="flat key = value config file")
    common.add_argument("--out", default=None, help="output directory (overrides out_dir)")
    common.add_argument("--seed", type=int, default=None, help="seed override")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic panel as CSV files")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a forecaster on a panel")
    p.add_argument("--method", choices=VARIANTS, default=None, help="de-biasing method override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("audit", parents=[common], help="evaluate checkpoints for error parity")
    p.add_argument("checkpoints", nargs="+", help="checkpoint.json paths")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("report", parents=[common], help="re-render combined tables from report.json files")
    p.add_argument("reports", nargs="+", help="report.json paths")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    level_name = os.environ.get("PARITY_FORECAST_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level_name, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParityForecastError as exc:
        print(f"{exc.category}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io-error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
