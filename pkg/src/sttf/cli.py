"""
Command-line entry point.

    sttf decompose --data flow.csv --out-dir runs/emd
    sttf train     --data flow.csv --out-dir runs/sttf
    sttf predict   --data flow.csv --model runs/sttf/model.json
    sttf evaluate  --data flow.csv --model runs/sttf/model.json --out-dir runs/eval
    sttf baseline  --data flow.csv --out-dir runs/base
    sttf compare   --data flow.csv --out-dir runs/cmp

Settings come from a JSON config file (``--config``) with command-line flags
taking precedence. Every command writes ``manifest.json`` next to its
outputs. Outputs are staged in a temporary directory and moved into place
only once all of them exist, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__, baselines, forecaster
from .emd import BOUNDARY_POLICIES, EmdConfig, InsufficientExtremaError, decompose
from .metrics import (TABLE_FOOTER, ZERO_POLICIES, EvalReport, comparison_csv, comparison_table,
                      published_reference_reports)
from .neuralnet import TrainConfig, TrainingDivergedError
from .plotting import line_chart_svg, parse_range
from .synthetic import traffic_like_series
from .timeseries import DataError, load_csv, split_point, write_csv

logger = logging.getLogger("sttf")

MODEL_KEYS = ("naive", "AR", "ARMA", "ARIMA", "LSTM", "STTF", "STTF-causal")
DEFAULT_MODELS = ("naive", "AR", "ARMA", "ARIMA", "LSTM", "STTF")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: Optional[str] = None
    column: str = "value"
    timestamp_column: Optional[str] = None
    interval_minutes: int = 30
    train_fraction: float = 2 / 3
    lookback: int = 3
    # EMD
    max_sift_iters: int = 100
    zero_mean_tol: float = 0.05
    max_imfs: int = 12
    boundary: str = "mirror"
    emd_scope: str = "full"
    causal_window: int = 336
    center: bool = False
    # network / training
    hidden: int = 10
    score_dim: int = 10
    dense_units: int = 10
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    patience: int = 20
    validation_fraction: float = 0.1
    channel_scaling: str = "shared"
    seed: int = 0
    # evaluation
    zero_policy: str = "skip"
    recursive: bool = False
    ar_order: int = 2
    arma_order: tuple = (2, 2)
    arima_order: tuple = (2, 1, 2)
    grid_search: bool = False
    models: tuple = DEFAULT_MODELS
    model: Optional[str] = None
    plot_range: Optional[str] = None
    with_published: bool = False
    out_dir: str = "runs"

    def __post_init__(self):
        self.arma_order = tuple(int(v) for v in self.arma_order)
        self.arima_order = tuple(int(v) for v in self.arima_order)
        self.models = tuple(self.models)
        checks = [
            (0.0 < self.train_fraction < 1.0, "train_fraction must be in (0, 1)"),
            (self.lookback >= 1, "lookback must be >= 1"),
            (self.interval_minutes > 0, "interval_minutes must be positive"),
            (self.max_sift_iters >= 1, "max_sift_iters must be >= 1"),
            (self.zero_mean_tol > 0, "zero_mean_tol must be positive"),
            (self.max_imfs >= 0, "max_imfs must be >= 0"),
            (self.boundary in BOUNDARY_POLICIES, f"boundary must be one of {BOUNDARY_POLICIES}"),
            (self.emd_scope in forecaster.EMD_SCOPES, f"emd_scope must be one of {forecaster.EMD_SCOPES}"),
            (self.causal_window > self.lookback, "causal_window must exceed lookback"),
            (min(self.hidden, self.score_dim, self.dense_units) >= 1, "layer sizes must be >= 1"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.lr > 0, "lr must be positive"),
            (self.patience >= 1, "patience must be >= 1"),
            (0.0 <= self.validation_fraction < 1.0, "validation_fraction must be in [0, 1)"),
            (self.channel_scaling in forecaster.CHANNEL_SCALINGS,
             f"channel_scaling must be one of {forecaster.CHANNEL_SCALINGS}"),
            (self.seed >= 0, "seed must be >= 0"),
            (self.zero_policy in ZERO_POLICIES, f"zero_policy must be one of {ZERO_POLICIES}"),
            (self.ar_order >= 1, "ar_order must be >= 1"),
            (len(self.arma_order) == 2 and min(self.arma_order) >= 0, "arma_order is (p, q)"),
            (len(self.arima_order) == 3 and min(self.arima_order) >= 0
             and self.arima_order[1] <= 2, "arima_order is (p, d, q) with d <= 2"),
            (all(m in MODEL_KEYS for m in self.models), f"models must be drawn from {MODEL_KEYS}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("arma_order", "arima_order", "models"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def emd_config(self) -> EmdConfig:
        return EmdConfig(max_sift_iters=self.max_sift_iters, zero_mean_tol=self.zero_mean_tol,
                         max_imfs=self.max_imfs, boundary=self.boundary)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, seed=self.seed,
                           validation_fraction=self.validation_fraction, patience=self.patience,
                           hidden=self.hidden, score_dim=self.score_dim, dense_units=self.dense_units)


# ---------------------------------------------------------------------------
# output staging


class Staging:
    """Collect output files in a temp dir; move them all into ``out_dir`` on commit."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out_dir))
        self.names: list[str] = []

    def write(self, name: str, text: str) -> None:
        (self.tmp / name).write_text(text)
        if name not in self.names:
            self.names.append(name)

    def digests(self) -> dict:
        return {n: hashlib.sha256((self.tmp / n).read_bytes()).hexdigest() for n in sorted(self.names)}

    def commit(self) -> list[Path]:
        out = []
        for name in self.names:
            dest = self.out_dir / name
            os.replace(self.tmp / name, dest)
            out.append(dest)
        shutil.rmtree(self.tmp, ignore_errors=True)
        return out

    def discard(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return False


def _file_digest(path) -> Optional[str]:
    if path is None or not Path(path).is_file():
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(stage: Staging, command: str, cfg: RunConfig) -> None:
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "data_sha256": _file_digest(cfg.data),
        "model_sha256": _file_digest(cfg.model),
        "versions": {"sttf": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "outputs": stage.digests(),
    }
    stage.write("manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def _csv_text(header, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _overlay_outputs(stage: Staging, cfg: RunConfig, actual, named_preds: dict, title: str,
                     stem: str = "overlay") -> None:
    """Fig. 4 style data: CSV of actual vs predictions plus an SVG chart."""
    actual = np.asarray(actual, dtype=np.float64)
    cols = [actual] + [np.asarray(p, dtype=np.float64) for p in named_preds.values()]
    header = ["actual"] + (["predicted"] if len(named_preds) == 1 else list(named_preds))
    stage.write(f"{stem}.csv", _csv_text(header, cols))
    sl = parse_range(cfg.plot_range, actual.size)
    plot = {"actual": actual[sl], **{k: np.asarray(v)[sl] for k, v in named_preds.items()}}
    stage.write(f"{stem}.svg", line_chart_svg(plot, title=title, x_offset=sl.start))


def _load_series(cfg: RunConfig):
    if not cfg.data:
        raise ConfigError("--data is required")
    return load_csv(cfg.data, cfg.column, cfg.interval_minutes, cfg.timestamp_column)


def _report_name(name: str) -> str:
    return "report_" + "".join(c if c.isalnum() else "_" for c in name) + ".json"


# ---------------------------------------------------------------------------
# commands


def cmd_decompose(cfg: RunConfig) -> int:
    series = _load_series(cfg)
    values = np.asarray(series.values, dtype=np.float64)
    offset = float(values.mean()) if cfg.center else 0.0
    signal = values - offset
    imfset = decompose(signal, cfg.emd_config())
    err = np.abs(imfset.reconstruct() - signal)
    scale = float(np.max(np.abs(signal))) or 1.0
    header = [f"imf_{k + 1}" for k in range(imfset.n_imfs)] + ["residual", "reconstruction_error"]
    text = _csv_text(header, [*imfset.imfs, imfset.residual, err])
    sidecar = {
        "n_imfs": imfset.n_imfs,
        "sift_counts": list(imfset.sift_counts),
        "converged": list(imfset.converged),
        "config": imfset.config.to_dict(),
        "centered": cfg.center,
        "removed_mean": offset,
        "max_reconstruction_error": float(err.max()),
        "relative_reconstruction_error": float(err.max()) / scale,
    }
    with Staging(cfg.out_dir) as stage:
        stage.write("imfs.csv", text)
        stage.write("imfs.json", json.dumps(sidecar, indent=1) + "\n")
        panels = {"signal": signal, **{f"imf_{k + 1}": imf for k, imf in enumerate(imfset.imfs)},
                  "residual": imfset.residual}
        stage.write("imfs.svg", "".join(
            line_chart_svg({name: y}, title=name, height=160) for name, y in panels.items()))
        write_manifest(stage, "decompose", cfg)
    print(f"IMFs: {imfset.n_imfs}")
    print(f"max reconstruction error: {err.max():.3e} (relative {err.max() / scale:.3e})")
    return 0


def _fit(cfg: RunConfig, values, use_emd: bool, scope: str, name: str):
    return forecaster.fit(values, cfg.train_fraction, cfg.emd_config(), cfg.train_config(),
                          cfg.lookback, use_emd=use_emd, emd_scope=scope,
                          causal_window=cfg.causal_window, zero_policy=cfg.zero_policy,
                          model_name=name, channel_scaling=cfg.channel_scaling)


def cmd_train(cfg: RunConfig) -> int:
    series = _load_series(cfg)
    result = _fit(cfg, series.values, True, cfg.emd_scope, "STTF")
    report = result.report
    with Staging(cfg.out_dir) as stage:
        stage.write("model.json", json.dumps(result.model.to_dict()))
        stage.write("loss_history.csv", _csv_text(
            ["epoch", "train_loss", "val_loss"], list(zip(*result.history.history_rows()))))
        stage.write("report.json", report.to_json() + "\n")
        _overlay_outputs(stage, cfg, report.labels, {report.model_name: report.predictions},
                         f"{report.model_name} one-step test predictions", stem="predictions")
        write_manifest(stage, "train", cfg)
    print(f"IMFs used: {result.n_imfs}  best epoch: {result.history.best_epoch}")
    print(f"test RMSE {report.rmse:.4f}  MAPE {report.mape_percent:.4f}%  (n={report.n})")
    return 0


def _require_model(cfg: RunConfig):
    if not cfg.model:
        raise ConfigError("--model is required")
    if not Path(cfg.model).is_file():
        raise DataError(f"model checkpoint not found: {cfg.model}")
    return forecaster.load_model(cfg.model)


def cmd_predict(cfg: RunConfig) -> int:
    model = _require_model(cfg)
    series = _load_series(cfg)
    window = forecaster.recent_channels(model, series.values)
    value = forecaster.predict_next(model, window)
    with Staging(cfg.out_dir) as stage:
        stage.write("prediction.json", json.dumps(
            {"after_index": len(series) - 1, "next_value": value}, indent=1) + "\n")
        write_manifest(stage, "predict", cfg)
    print(repr(value))
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    model = _require_model(cfg)
    series = _load_series(cfg)
    report = forecaster.evaluate_series(model, series.values, cfg.train_fraction, cfg.zero_policy)
    with Staging(cfg.out_dir) as stage:
        stage.write("report.json", report.to_json() + "\n")
        stage.write("table.txt", comparison_table([report], TABLE_FOOTER))
        _overlay_outputs(stage, cfg, report.labels, {report.model_name: report.predictions},
                         f"{report.model_name} one-step test predictions", stem="predictions")
        write_manifest(stage, "evaluate", cfg)
    print(comparison_table([report]), end="")
    return 0


def run_models(cfg: RunConfig, values, keys) -> list[EvalReport]:
    """Evaluate the requested models on the chronological test split, in order."""
    classical = [k for k in keys if k in ("naive", "AR", "ARMA", "ARIMA")]
    by_key = {}
    if classical:
        reports = baselines.evaluate_baselines(
            values, classical, cfg.train_fraction, cfg.zero_policy, cfg.recursive,
            cfg.ar_order, cfg.arma_order, cfg.arima_order, cfg.grid_search)
        by_key.update(zip(classical, reports))
    for key in keys:
        if key == "LSTM":
            by_key[key] = _fit(cfg, values, False, "full", "LSTM").report
        elif key == "STTF":
            if cfg.model:
                model = _require_model(cfg)
                by_key[key] = forecaster.evaluate_series(model, values, cfg.train_fraction,
                                                         cfg.zero_policy, "STTF")
            else:
                by_key[key] = _fit(cfg, values, True, cfg.emd_scope, "STTF").report
        elif key == "STTF-causal":
            by_key[key] = _fit(cfg, values, True, "causal", "STTF (causal)").report
    return [by_key[k] for k in keys]


def _table_outputs(stage: Staging, cfg: RunConfig, reports, title: str) -> str:
    table = comparison_table(reports, TABLE_FOOTER)
    if cfg.with_published:
        table += "\nPublished reference (not recomputed):\n" + comparison_table(published_reference_reports())
    stage.write("table.txt", table)
    stage.write("table.csv", comparison_csv(reports))
    for r in reports:
        stage.write(_report_name(r.model_name), r.to_json() + "\n")
    _overlay_outputs(stage, cfg, reports[0].labels, {r.model_name: r.predictions for r in reports}, title)
    return table


def _compare_like(cfg: RunConfig, command: str, keys) -> int:
    series = _load_series(cfg)
    if not keys:
        raise ConfigError("no models selected")
    reports = run_models(cfg, series.values, keys)
    with Staging(cfg.out_dir) as stage:
        table = _table_outputs(stage, cfg, reports, "one-step test predictions")
        write_manifest(stage, command, cfg)
    print(table, end="")
    return 0


def cmd_baseline(cfg: RunConfig) -> int:
    keys = [k for k in cfg.models if k in ("naive", "AR", "ARMA", "ARIMA", "LSTM")]
    return _compare_like(cfg, "baseline", keys)


def cmd_compare(cfg: RunConfig) -> int:
    return _compare_like(cfg, "compare", list(cfg.models))


def cmd_synth(cfg: RunConfig, n: int) -> int:
    series = traffic_like_series(n=n, seed=cfg.seed, interval_minutes=cfg.interval_minutes)
    with Staging(cfg.out_dir) as stage:
        buf = stage.tmp / "synthetic.csv"
        write_csv(buf, series.values, cfg.column)
        stage.names.append("synthetic.csv")
        write_manifest(stage, "synth", cfg)
    print(Path(cfg.out_dir) / "synthetic.csv")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _int_tuple(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _model_list(text: str) -> tuple:
    lookup = {k.lower(): k for k in MODEL_KEYS}
    out = []
    for item in text.split(","):
        key = lookup.get(item.strip().lower())
        if key is None:
            raise argparse.ArgumentTypeError(f"unknown model {item!r}; choose from {', '.join(MODEL_KEYS)}")
        out.append(key)
    return tuple(out)


def _common_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    p = argparse.ArgumentParser(add_help=False, argument_default=S)
    p.add_argument("--config", help="JSON run configuration; flags override its values")
    p.add_argument("--data", help="input CSV with a header row")
    p.add_argument("--column", help="value column name (default 'value')")
    p.add_argument("--timestamp-column", dest="timestamp_column")
    p.add_argument("--interval-minutes", dest="interval_minutes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--lookback", type=int)
    p.add_argument("--emd-scope", dest="emd_scope", choices=forecaster.EMD_SCOPES)
    p.add_argument("--causal", dest="emd_scope", action="store_const", const="causal",
                   help="shorthand for --emd-scope causal")
    p.add_argument("--causal-window", dest="causal_window", type=int)
    p.add_argument("--zero-policy", dest="zero_policy", choices=ZERO_POLICIES)
    p.add_argument("--recursive", action="store_true",
                   help="feed back predictions instead of observed values (baselines)")
    p.add_argument("--max-sift-iters", dest="max_sift_iters", type=int)
    p.add_argument("--zero-mean-tol", dest="zero_mean_tol", type=float)
    p.add_argument("--max-imfs", dest="max_imfs", type=int)
    p.add_argument("--boundary", choices=BOUNDARY_POLICIES)
    p.add_argument("--hidden", type=int)
    p.add_argument("--score-dim", dest="score_dim", type=int)
    p.add_argument("--dense-units", dest="dense_units", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--validation-fraction", dest="validation_fraction", type=float)
    p.add_argument("--channel-scaling", dest="channel_scaling", choices=forecaster.CHANNEL_SCALINGS)
    p.add_argument("--ar-order", dest="ar_order", type=int)
    p.add_argument("--arma-order", dest="arma_order", type=_int_tuple, metavar="P,Q")
    p.add_argument("--arima-order", dest="arima_order", type=_int_tuple, metavar="P,D,Q")
    p.add_argument("--grid-search", dest="grid_search", action="store_true",
                   help="pick ARMA/ARIMA (p, q) in 1..4 by AIC")
    p.add_argument("--model", help="model checkpoint (model.json)")
    p.add_argument("--models", type=_model_list, help=f"comma list from {', '.join(MODEL_KEYS)}")
    p.add_argument("--plot-range", dest="plot_range", metavar="START:END",
                   help="test-index range drawn in the SVG chart")
    p.add_argument("--with-published", dest="with_published", action="store_true",
                   help="append the published reference rows to table.txt")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="sttf", description=__doc__.split("\n\n")[0].strip() or None)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    d = sub.add_parser("decompose", parents=[common], help="EMD of a series into IMFs + residual")
    d.add_argument("--center", action="store_true", default=argparse.SUPPRESS,
                   help="subtract the series mean before decomposing")
    sub.add_parser("train", parents=[common], help="fit the EMD + attention LSTM forecaster")
    sub.add_parser("predict", parents=[common], help="forecast the interval after the data")
    sub.add_parser("evaluate", parents=[common], help="score a checkpoint on the test split")
    sub.add_parser("baseline", parents=[common], help="naive / AR / ARMA / ARIMA / plain LSTM")
    sub.add_parser("compare", parents=[common], help="comparison table of all requested models")
    s = sub.add_parser("synth", parents=[common], help="write a seeded synthetic traffic-like CSV")
    s.add_argument("-n", "--length", type=int, default=3840)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    given = {k: v for k, v in vars(args).items()
             if k not in ("command", "config", "verbose", "length")}
    base = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        base = RunConfig.from_json(path.read_text()).to_dict()
    base.update(given)
    return RunConfig.from_dict(base)


COMMANDS = {
    "decompose": cmd_decompose,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "baseline": cmd_baseline,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "synth":
            return cmd_synth(cfg, args.length)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DataError, InsufficientExtremaError, TrainingDivergedError,
            ValueError, OSError) as exc:
        print(f"sttf {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
