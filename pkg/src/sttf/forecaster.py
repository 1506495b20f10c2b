"""
End-to-end next-interval forecaster.

    center -> EMD -> per-channel standardisation -> sliding windows
           -> LSTM/attention network -> rescale + restore mean

Two decomposition scopes are supported. ``full`` decomposes the whole
series once, so IMF values near time t are shaped by samples after t.
``causal`` decomposes, for every sample, only the trailing
``causal_window`` observations that end at the window's last time step.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import emd as emd_mod
from .emd import EmdConfig
from .metrics import EvalReport, evaluate_predictions
from .neuralnet import (CHECKPOINT_FORMAT, CHECKPOINT_VERSION, ModelParams, TrainConfig,
                        TrainResult, forward_batch, mse_loss, train)
from .timeseries import DataError, TimeSeries, WindowDataset, build_windows, split_point

logger = logging.getLogger(__name__)

EMD_SCOPES = ("full", "causal")
CHANNEL_SCALINGS = ("shared", "channel")


@dataclass
class SttfModel:
    net: ModelParams
    removed_mean: float
    channel_scales: np.ndarray
    target_scale: float
    lookback: int
    emd_config: EmdConfig = field(default_factory=EmdConfig)
    use_emd: bool = True
    emd_scope: str = "full"
    causal_window: int = 336

    def __post_init__(self):
        self.channel_scales = np.asarray(self.channel_scales, dtype=np.float64)
        if np.any(self.channel_scales <= 0):
            raise ValueError("channel scales must be positive")
        if self.channel_scales.size != self.net.input_dim:
            raise ValueError("channel count does not match the network input size")

    @property
    def channel_count(self) -> int:
        return int(self.channel_scales.size)

    def network_inputs(self, raw_windows) -> np.ndarray:
        return np.asarray(raw_windows, dtype=np.float64) / self.channel_scales

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "removed_mean": self.removed_mean,
            "channel_scales": self.channel_scales.tolist(),
            "target_scale": self.target_scale,
            "channel_count": self.channel_count,
            "lookback": self.lookback,
            "use_emd": self.use_emd,
            "emd_scope": self.emd_scope,
            "causal_window": self.causal_window,
            "emd_config": self.emd_config.to_dict(),
            "net": self.net.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SttfModel":
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a model checkpoint")
        if int(d.get("version", -1)) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {d.get('version')}")
        return cls(
            net=ModelParams.from_dict(d["net"]),
            removed_mean=float(d["removed_mean"]),
            channel_scales=np.asarray(d["channel_scales"], dtype=np.float64),
            target_scale=float(d["target_scale"]),
            lookback=int(d["lookback"]),
            emd_config=EmdConfig(**d["emd_config"]),
            use_emd=bool(d["use_emd"]),
            emd_scope=d["emd_scope"],
            causal_window=int(d["causal_window"]),
        )


def save_model(model: SttfModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path) -> SttfModel:
    return SttfModel.from_dict(json.loads(Path(path).read_text()))


@dataclass
class FitResult:
    model: SttfModel
    report: EvalReport
    history: TrainResult
    n_train: int
    n_imfs: int
    test_label_index: np.ndarray


# ---------------------------------------------------------------------------
# channel construction


def match_channels(channels, k: int) -> np.ndarray:
    """Resize the last axis (IMFs..., residual) to ``k`` channels.

    Surplus low-frequency IMFs are folded into the residual channel; missing
    ones become zero channels placed before the residual. Sums over the last
    axis are unchanged either way.
    """
    c = np.asarray(channels, dtype=np.float64)
    have = c.shape[-1]
    if have > k:
        return np.concatenate([c[..., :k - 1], c[..., k - 1:].sum(axis=-1, keepdims=True)], axis=-1)
    if have < k:
        pad = np.zeros(c.shape[:-1] + (k - have,))
        return np.concatenate([c[..., :-1], pad, c[..., -1:]], axis=-1)
    return c


def fit_channel_count(imfset: emd_mod.ImfSet, n_imfs: int) -> np.ndarray:
    """N x (n_imfs + 1) channels from a decomposition with any IMF count."""
    return match_channels(imfset.as_channels(), n_imfs + 1)


def _causal_features(centered: np.ndarray, label_index: np.ndarray, lookback: int,
                     n_imfs: int, window: int, cfg: EmdConfig) -> np.ndarray:
    feats = np.empty((label_index.size, lookback, n_imfs + 1))
    for row, j in enumerate(label_index):
        segment = centered[j - window:j]
        ims = emd_mod.decompose(segment, cfg, max_imfs=n_imfs)
        feats[row] = fit_channel_count(ims, n_imfs)[-lookback:]
    return feats


def recent_channels(model: SttfModel, history) -> np.ndarray:
    """Raw L x K channel matrix for predicting the value after ``history``."""
    values = np.asarray(getattr(history, "values", history), dtype=np.float64)
    centered = values - model.removed_mean
    k = model.channel_count
    if not model.use_emd or k == 1:
        chans = centered[:, None]
    elif model.emd_scope == "causal":
        if values.size < model.causal_window:
            raise DataError(f"causal model needs {model.causal_window} recent values")
        ims = emd_mod.decompose(centered[-model.causal_window:], model.emd_config, max_imfs=k - 1)
        chans = fit_channel_count(ims, k - 1)
    else:
        chans = fit_channel_count(emd_mod.decompose(centered, model.emd_config), k - 1)
    if chans.shape[0] < model.lookback:
        raise DataError(f"need at least {model.lookback} values of history")
    return chans[-model.lookback:]


# ---------------------------------------------------------------------------
# fit / predict / evaluate


def _safe_std(x, axis=None):
    """Standard deviation, with 1.0 for (numerically) constant data."""
    x = np.asarray(x, dtype=np.float64)
    s = np.std(x, axis=axis)
    # a constant channel keeps round-off spread (~1e-14); never divide by it
    floor = 1e-9 * np.maximum(1.0, np.max(np.abs(x), axis=axis))
    return np.where(s > floor, s, 1.0)


@dataclass
class PreparedData:
    windows: WindowDataset       # unscaled channels, centred labels
    removed_mean: float
    n_train: int
    n_imfs: int
    channels: Optional[np.ndarray] = None   # full-series channel matrix, if any

    def train_rows(self) -> np.ndarray:
        """Channel rows observed before the split, used for scaling."""
        if self.channels is not None:
            return self.channels[:self.n_train]
        w = self.windows.subset(self.windows.label_index < self.n_train)
        return w.features.reshape(-1, w.channel_count)


def build_dataset(series, train_fraction: float = 2 / 3, lookback: int = 3,
                  emd_config: Optional[EmdConfig] = None, use_emd: bool = True,
                  emd_scope: str = "full", causal_window: int = 336):
    """Centre, decompose and window ``series``.

    In causal mode every sample gets its own trailing decomposition and
    samples start once ``causal_window`` observations are available.
    """
    if emd_scope not in EMD_SCOPES:
        raise ValueError(f"emd_scope must be one of {EMD_SCOPES}")
    cfg = emd_config or EmdConfig()
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    n = values.size
    n_train = split_point(n, train_fraction)
    if n_train < lookback + 1 or n - n_train < 1:
        raise DataError(f"series of length {n} too short for the split at {n_train}")

    if use_emd and emd_scope == "causal":
        removed_mean = float(values[:n_train].mean())
        centered = values - removed_mean
        if n_train <= causal_window + lookback:
            raise DataError(f"training part ({n_train}) shorter than causal window + lookback")
        n_imfs = emd_mod.decompose(centered[:n_train], cfg).n_imfs
        if n_imfs == 0:
            logger.warning("EMD found no IMFs; falling back to the centred signal as the only channel")
            chans = centered[:, None]
            return PreparedData(build_windows(chans, centered, lookback), removed_mean, n_train, 0, chans)
        label_index = np.arange(causal_window, n)
        feats = _causal_features(centered, label_index, lookback, n_imfs, causal_window, cfg)
        ds = WindowDataset(feats, centered[label_index], lookback, n_imfs + 1, label_index)
        return PreparedData(ds, removed_mean, n_train, n_imfs)

    removed_mean = float(values.mean())
    centered = values - removed_mean
    n_imfs = 0
    channels = centered[:, None]
    if use_emd:
        imfset = emd_mod.decompose(centered, cfg)
        n_imfs = imfset.n_imfs
        if n_imfs == 0:
            logger.warning("EMD found no IMFs; falling back to the centred signal as the only channel")
        else:
            channels = imfset.as_channels()
    return PreparedData(build_windows(channels, centered, lookback), removed_mean, n_train, n_imfs, channels)


def fit(series, train_fraction: float = 2 / 3, emd_config: Optional[EmdConfig] = None,
        train_config: TrainConfig = TrainConfig(), lookback: int = 3, use_emd: bool = True,
        emd_scope: str = "full", causal_window: int = 336, zero_policy: str = "skip",
        model_name: Optional[str] = None, channel_scaling: str = "shared") -> FitResult:
    """Train on the first ``train_fraction`` of ``series``, report on the rest.

    Test predictions are one step ahead from observed windows, one per test
    interval. Channel and target scales come from the training portion.

    ``channel_scaling='shared'`` divides every channel by the training std
    of the centred signal, so channel sums stay proportional to the signal
    and near-constant slow modes stay small. ``'channel'`` standardises each
    channel by its own training std; slow IMFs that barely vary in training
    are then blown up to unit scale and extrapolate badly on test data.
    """
    cfg = emd_config or EmdConfig()
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    prep = build_dataset(values, train_fraction, lookback, cfg, use_emd, emd_scope, causal_window)
    raw, removed_mean, n_train, n_imfs = prep.windows, prep.removed_mean, prep.n_train, prep.n_imfs

    is_train = raw.label_index < n_train
    train_raw, test_raw = raw.subset(is_train), raw.subset(~is_train)
    if len(train_raw) == 0 or len(test_raw) == 0:
        raise DataError("split leaves no training or no test windows")

    centered_train = values[:n_train] - removed_mean
    target_scale = float(_safe_std(centered_train))
    if channel_scaling not in CHANNEL_SCALINGS:
        raise ValueError(f"channel_scaling must be one of {CHANNEL_SCALINGS}")
    if channel_scaling == "shared":
        scales = np.full(raw.channel_count, target_scale)
    else:
        scales = np.atleast_1d(_safe_std(prep.train_rows(), axis=0))

    net = ModelParams.init(raw.channel_count, train_config.hidden, train_config.score_dim,
                           train_config.dense_units, seed=train_config.seed)
    model = SttfModel(net, removed_mean, scales, target_scale, lookback, cfg,
                      use_emd and n_imfs > 0, emd_scope if use_emd else "full", causal_window)
    scaled = WindowDataset(model.network_inputs(train_raw.features), train_raw.labels / target_scale,
                           lookback, raw.channel_count, train_raw.label_index)
    if np.ptp(centered_train) <= emd_mod.NEGLIGIBLE * max(1.0, abs(removed_mean)):
        # nothing to learn: a zero network predicts the removed mean exactly
        logger.warning("training data is constant; using a zero network")
        net = ModelParams.zeros(raw.channel_count, train_config.hidden, train_config.score_dim,
                                train_config.dense_units)
        model.net = net
        loss = mse_loss(net, scaled.features, scaled.labels)
        history = TrainResult(net.copy(), [loss], [loss], 0)
    else:
        history = train(net, scaled, train_config)
        model.net = history.params

    name = model_name or ("STTF" if model.use_emd else "LSTM")
    report = evaluate_on_test(model, test_raw.features, values[test_raw.label_index],
                              zero_policy=zero_policy, model_name=name)
    return FitResult(model, report, history, n_train, n_imfs, test_raw.label_index)


def predict_windows(model: SttfModel, raw_windows) -> np.ndarray:
    """Original-scale predictions for a stack of raw (L, K) windows."""
    w = np.asarray(raw_windows, dtype=np.float64)
    if w.ndim != 3 or w.shape[1:] != (model.lookback, model.channel_count):
        raise ValueError(f"expected windows (n, {model.lookback}, {model.channel_count}), got {w.shape}")
    out = []
    for s in range(0, w.shape[0], 1024):
        pred, _ = forward_batch(model.net, model.network_inputs(w[s:s + 1024]))
        out.append(pred)
    return np.concatenate(out) * model.target_scale + model.removed_mean


def predict_next(model: SttfModel, recent) -> float:
    w = np.asarray(recent, dtype=np.float64)
    if w.shape != (model.lookback, model.channel_count):
        raise ValueError(f"expected a ({model.lookback}, {model.channel_count}) matrix, got {w.shape}")
    return float(predict_windows(model, w[None])[0])


def evaluate_on_test(model: SttfModel, test_windows, test_labels, zero_policy: str = "skip",
                     model_name: str = "STTF") -> EvalReport:
    labels = np.asarray(test_labels, dtype=np.float64)
    if labels.size == 0:
        raise ValueError("empty test set")
    preds = predict_windows(model, test_windows)
    return evaluate_predictions(model_name, labels, preds, zero_policy)


def evaluate_series(model: SttfModel, series, train_fraction: float = 2 / 3,
                    zero_policy: str = "skip", model_name: Optional[str] = None) -> EvalReport:
    """Rebuild the test windows of ``series`` and evaluate a stored model."""
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    prep = build_dataset(values, train_fraction, model.lookback, model.emd_config, model.use_emd,
                         model.emd_scope, model.causal_window)
    raw, n_train = prep.windows, prep.n_train
    if raw.channel_count != model.channel_count:
        if not model.use_emd:
            raise DataError("channel count of the data does not match the model")
        # this data decomposed into a different number of IMFs
        raw = WindowDataset(match_channels(raw.features, model.channel_count), raw.labels,
                            raw.lookback, model.channel_count, raw.label_index)
    test = raw.subset(raw.label_index >= n_train)
    return evaluate_on_test(model, test.features, values[test.label_index], zero_policy,
                            model_name or ("STTF" if model.use_emd else "LSTM"))
