"""Series container, CSV ingestion, centering, splitting and windowing."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MIN_SERIES_LENGTH = 4


class DataError(ValueError):
    """Raised when input data cannot be ingested or violates a precondition."""


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled scalar series (vehicles per interval)."""

    values: np.ndarray
    interval_minutes: int = 30
    start_label: Optional[str] = None

    def __post_init__(self):
        arr = _frozen_array(self.values)
        if arr.ndim != 1:
            raise DataError(f"series must be one-dimensional, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise DataError(f"non-finite value at index {bad}")
        if int(self.interval_minutes) <= 0:
            raise DataError("interval_minutes must be positive")
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]

    def summary(self) -> dict:
        return summarize(self.values)


@dataclass(frozen=True)
class CenteredSeries:
    values: np.ndarray
    removed_mean: float

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values))
        object.__setattr__(self, "removed_mean", float(self.removed_mean))

    def __len__(self) -> int:
        return self.values.shape[0]

    def restore(self, values=None) -> np.ndarray:
        """Add the removed mean back (to `values` if given, else to self)."""
        base = self.values if values is None else np.asarray(values, dtype=np.float64)
        return base + self.removed_mean


@dataclass(frozen=True)
class WindowDataset:
    """Supervised samples: ``features[i]`` is L x K, ``labels[i]`` the next value.

    ``label_index[i]`` is the time index of the label in the source series.
    """

    features: np.ndarray
    labels: np.ndarray
    lookback: int
    channel_count: int
    label_index: np.ndarray = field(default=None)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def subset(self, mask) -> "WindowDataset":
        return WindowDataset(
            features=self.features[mask],
            labels=self.labels[mask],
            lookback=self.lookback,
            channel_count=self.channel_count,
            label_index=None if self.label_index is None else self.label_index[mask],
        )


SUMMARY_KEYS = ("count", "min", "max", "median", "mean")


def summarize(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {
        "count": int(arr.size),
        "min": float(arr.min()),
        "max": float(arr.max()),
        "median": float(np.median(arr)),
        "mean": float(arr.mean()),
    }


def format_summary(summary: dict) -> str:
    return "\n".join(f"{key:>6}: {summary[key]:g}" for key in SUMMARY_KEYS)


def load_csv(path, value_column: str = "value", interval_minutes: int = 30,
             timestamp_column: Optional[str] = None) -> TimeSeries:
    """Read one value column from a headered CSV file.

    Rows are kept in file order. Row numbers in error messages are 1-based
    data rows (the header is not counted).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or value_column not in reader.fieldnames:
            raise DataError(
                f"column {value_column!r} not in {path} (columns: {reader.fieldnames})"
            )
        values = []
        start_label = None
        for row_number, row in enumerate(reader, start=1):
            raw = (row.get(value_column) or "").strip()
            try:
                value = float(raw)
            except ValueError:
                raise DataError(f"row {row_number}: cannot parse {raw!r} as a number") from None
            if not math.isfinite(value):
                raise DataError(f"row {row_number}: non-finite value {raw!r}")
            if row_number == 1 and timestamp_column and timestamp_column in row:
                start_label = row[timestamp_column]
            values.append(value)
    if len(values) < MIN_SERIES_LENGTH:
        raise DataError(f"{path} has {len(values)} rows, need at least {MIN_SERIES_LENGTH}")
    series = TimeSeries(np.asarray(values), interval_minutes=interval_minutes,
                        start_label=start_label)
    logger.info("loaded %s\n%s", path, format_summary(series.summary()))
    return series


def write_csv(path, values, value_column: str = "value") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([value_column])
        for v in np.asarray(values, dtype=np.float64):
            writer.writerow([repr(float(v))])


def center(series) -> CenteredSeries:
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=np.float64)
    if values.size == 0:
        raise DataError("cannot center an empty series")
    mean = float(np.mean(values))
    return CenteredSeries(values - mean, mean)


def split_train_test(series: TimeSeries, train_fraction: float = 2 / 3,
                     lookback: int = 3) -> tuple[TimeSeries, TimeSeries]:
    """Chronological split; both parts must hold at least ``lookback + 1`` samples."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(series)
    n_train = split_point(n, train_fraction)
    n_test = n - n_train
    if n_train < lookback + 1:
        raise DataError(f"train part too short ({n_train} < {lookback + 1})")
    if n_test < lookback + 1:
        raise DataError(f"test part too short ({n_test} < {lookback + 1})")
    head = TimeSeries(series.values[:n_train], series.interval_minutes, series.start_label)
    tail = TimeSeries(series.values[n_train:], series.interval_minutes)
    return head, tail


def split_point(n: int, train_fraction: float) -> int:
    # round() keeps 2/3 of 2880 at exactly 1920 despite float error
    return int(round(n * train_fraction))


def build_windows(channels, labels_source, lookback: int = 3) -> WindowDataset:
    """Slide a length-`lookback` window over an N x K channel matrix.

    Sample ``i`` holds channel rows ``i .. i+lookback-1`` and is labelled with
    ``labels_source[i + lookback]``.
    """
    labels = labels_source.values if isinstance(labels_source, CenteredSeries) else np.asarray(labels_source, dtype=np.float64)
    if isinstance(channels, Sequence) and not isinstance(channels, np.ndarray):
        lengths = {len(c) for c in channels}
        if len(lengths) > 1:
            raise DataError(f"channels have mismatched lengths {sorted(lengths)}")
        channels = np.column_stack(channels) if channels else np.empty((0, 0))
    channels = np.asarray(channels, dtype=np.float64)
    if channels.ndim == 1:
        channels = channels[:, None]
    n = labels.shape[0]
    if channels.shape[0] != n:
        raise DataError(f"channel length {channels.shape[0]} != label length {n}")
    if lookback < 1:
        raise DataError("lookback must be >= 1")
    if lookback >= n:
        raise DataError(f"lookback {lookback} must be smaller than series length {n}")
    count = n - lookback
    idx = np.arange(count)[:, None] + np.arange(lookback)[None, :]
    return WindowDataset(
        features=channels[idx],
        labels=labels[lookback:].copy(),
        lookback=lookback,
        channel_count=channels.shape[1],
        label_index=np.arange(lookback, n),
    )
