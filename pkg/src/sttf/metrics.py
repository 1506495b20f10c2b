"""RMSE / MAPE, evaluation reports and the model comparison table."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

ZERO_POLICIES = ("skip", "epsilon")


def _pair(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(y_true, dtype=np.float64).ravel()
    p = np.asarray(y_pred, dtype=np.float64).ravel()
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} true vs {p.size} predicted")
    if t.size == 0:
        raise ValueError("need at least one prediction")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
        raise ValueError("predictions and labels must be finite")
    return t, p


def rmse(y_true, y_pred) -> float:
    t, p = _pair(y_true, y_pred)
    return float(np.sqrt(np.mean((t - p) ** 2)))


def mape(y_true, y_pred, zero_policy: str = "skip") -> float:
    """Mean absolute percentage error, in percent.

    Zero labels make the ratio undefined. ``skip`` drops them (see
    :func:`zero_label_count`); ``epsilon`` divides by ``max(|y_true|, 1)``.
    """
    t, p = _pair(y_true, y_pred)
    if zero_policy == "skip":
        keep = t != 0
        if not keep.any():
            raise ValueError("every label is zero; MAPE undefined under the skip policy")
        t, p = t[keep], p[keep]
        denom = np.abs(t)
    elif zero_policy == "epsilon":
        denom = np.maximum(np.abs(t), 1.0)
    else:
        raise ValueError(f"zero_policy must be one of {ZERO_POLICIES}")
    return float(np.mean(np.abs(t - p) / denom) * 100.0)


def zero_label_count(y_true) -> int:
    return int(np.count_nonzero(np.asarray(y_true) == 0))


@dataclass
class EvalReport:
    model_name: str
    rmse: float
    mape_percent: float
    n: int
    skipped_zero_count: int = 0
    zero_policy: str = "skip"
    predictions: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model_name": self.model_name,
            "rmse": self.rmse,
            "mape_percent": self.mape_percent,
            "n": self.n,
            "skipped_zero_count": self.skipped_zero_count,
            "zero_policy": self.zero_policy,
            "predictions": [float(v) for v in self.predictions],
            "labels": [float(v) for v in self.labels],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(d["model_name"], float(d["rmse"]), float(d["mape_percent"]), int(d["n"]),
                   int(d.get("skipped_zero_count", 0)), d.get("zero_policy", "skip"),
                   list(d.get("predictions", [])), list(d.get("labels", [])))


def evaluate_predictions(model_name: str, y_true, y_pred, zero_policy: str = "skip") -> EvalReport:
    t, p = _pair(y_true, y_pred)
    skipped = zero_label_count(t) if zero_policy == "skip" else 0
    return EvalReport(model_name, rmse(t, p), mape(t, p, zero_policy), int(t.size),
                      skipped, zero_policy, p.tolist(), t.tolist())


# ---------------------------------------------------------------------------
# comparison table


TABLE_FOOTER = ("Absolute values depend on the data, split and training settings; "
                "published figures are not expected to be reproduced exactly.")


def comparison_table(reports: Sequence[EvalReport], footer: Optional[str] = None) -> str:
    """Aligned plain-text table, rows in the given order, two decimals."""
    rows = [(r.model_name, f"{r.rmse:.2f}", f"{r.mape_percent:.2f}") for r in reports]
    header = ("Model", "RMSE", "MAPE (%)")
    widths = [max(len(header[c]), *(len(row[c]) for row in rows)) for c in range(3)]

    def fmt(row):
        return f"{row[0]:<{widths[0]}}  {row[1]:>{widths[1]}}  {row[2]:>{widths[2]}}"

    rule = "-" * (sum(widths) + 4)
    lines = [fmt(header), rule, *(fmt(row) for row in rows), rule]
    if footer:
        lines.append(footer)
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> list[tuple[str, float, float]]:
    """Inverse of :func:`comparison_table` (footer ignored)."""
    lines = text.splitlines()
    rules = [i for i, line in enumerate(lines) if line and set(line) == {"-"}]
    if len(rules) < 2:
        raise ValueError("not a comparison table")
    out = []
    for line in lines[rules[0] + 1:rules[1]]:
        name, r, m = line.rsplit(maxsplit=2)
        out.append((name.strip(), float(r), float(m)))
    return out


def comparison_csv(reports: Sequence[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "rmse", "mape_percent", "n", "skipped_zero_count"])
    for r in reports:
        writer.writerow([r.model_name, f"{r.rmse:.2f}", f"{r.mape_percent:.2f}", r.n, r.skipped_zero_count])
    return buf.getvalue()


# Reference rows as published for the NYC grid cell with the highest mean
# flow; kept only for documentation tables, never recomputed.
PUBLISHED_REFERENCE = (
    ("ARMA", 315.19, 73.51),
    ("ARIMA", 187.29, 96.42),
    ("LSTM", 57.53, 15.13),
    ("STDN", 19.05, 15.60),
    ("STTF", 16.25, 5.84),
)


def published_reference_reports() -> list[EvalReport]:
    return [EvalReport(name, r, m, n=0) for name, r, m in PUBLISHED_REFERENCE]


def is_finite_report(report: EvalReport) -> bool:
    return math.isfinite(report.rmse) and math.isfinite(report.mape_percent)
