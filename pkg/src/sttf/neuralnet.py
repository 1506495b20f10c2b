"""
Two-layer LSTM with additive attention after each layer, a tanh dense layer
and a linear scalar output, written directly in numpy (float64).

Data flow for a window of shape (L, K)::

    LSTM1 -> attention1 -> LSTM2 -> attention2 -> sum over time
          -> dense(tanh) -> linear output

Every function operates on a batch axis first; the single-window helpers
``model_forward`` / ``model_backward`` wrap the batched versions.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Iterator, NamedTuple, Optional

import numpy as np
from scipy.special import expit

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "sttf-model"
CHECKPOINT_VERSION = 1


class NonFiniteError(FloatingPointError):
    """A NaN or infinity appeared in an input, activation, gradient or loss."""


def _check_finite(arr, where: str):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {where}")


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int, shape=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_out, fan_in))


# ---------------------------------------------------------------------------
# parameter containers


class _TensorGroup:
    """Mixin giving dataclasses of arrays a uniform tensor interface."""

    def tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                yield f.name, value
            elif isinstance(value, _TensorGroup):
                for name, arr in value.tensors():
                    yield f"{f.name}.{name}", arr

    def map(self, fn, *others):
        """New instance with ``fn(self_tensor, *other_tensors)`` per tensor."""
        kwargs = {}
        for f in fields(self):
            value = getattr(self, f.name)
            rest = [getattr(o, f.name) for o in others]
            if isinstance(value, np.ndarray):
                kwargs[f.name] = np.asarray(fn(value, *rest), dtype=np.float64)
            elif isinstance(value, _TensorGroup):
                kwargs[f.name] = value.map(fn, *rest)
            else:
                kwargs[f.name] = value
        return type(self)(**kwargs)

    def zeros_like(self):
        return self.map(np.zeros_like)

    def copy(self):
        return self.map(np.copy)


@dataclass
class LstmCellParams(_TensorGroup):
    """Gate weights act on the concatenation ``[h_prev, x]``."""

    W_f: np.ndarray
    W_i: np.ndarray
    W_C: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_C: np.ndarray
    b_o: np.ndarray

    @property
    def hidden(self) -> int:
        return self.b_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_f.shape[1] - self.hidden

    @classmethod
    def zeros(cls, hidden: int, input_dim: int) -> "LstmCellParams":
        w = lambda: np.zeros((hidden, hidden + input_dim))  # noqa: E731
        b = lambda: np.zeros(hidden)  # noqa: E731
        return cls(w(), w(), w(), w(), b(), b(), b(), b())

    @classmethod
    def glorot(cls, rng, hidden: int, input_dim: int) -> "LstmCellParams":
        ws = [glorot_uniform(rng, hidden, hidden + input_dim) for _ in range(4)]
        return cls(*ws, *(np.zeros(hidden) for _ in range(4)))


@dataclass
class AttentionParams(_TensorGroup):
    W_a: np.ndarray
    v_a: np.ndarray
    b_a: np.ndarray

    @classmethod
    def zeros(cls, score: int, hidden: int) -> "AttentionParams":
        return cls(np.zeros((score, hidden)), np.zeros(score), np.zeros(score))

    @classmethod
    def glorot(cls, rng, score: int, hidden: int) -> "AttentionParams":
        return cls(glorot_uniform(rng, score, hidden),
                   glorot_uniform(rng, 1, score, shape=(score,)),
                   np.zeros(score))


@dataclass
class ModelParams(_TensorGroup):
    lstm1: LstmCellParams
    attn1: AttentionParams
    lstm2: LstmCellParams
    attn2: AttentionParams
    dense_W: np.ndarray
    dense_b: np.ndarray
    out_W: np.ndarray
    out_b: np.ndarray
    rng_seed: int = 0

    @property
    def hidden(self) -> int:
        return self.lstm1.hidden

    @property
    def input_dim(self) -> int:
        return self.lstm1.input_dim

    @property
    def score_dim(self) -> int:
        return self.attn1.v_a.shape[0]

    @property
    def dense_units(self) -> int:
        return self.dense_b.shape[0]

    def dims(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": self.hidden,
                "score_dim": self.score_dim, "dense_units": self.dense_units}

    @classmethod
    def zeros(cls, input_dim: int, hidden: int = 10, score_dim: int = 10,
              dense_units: int = 10) -> "ModelParams":
        return cls(
            LstmCellParams.zeros(hidden, input_dim),
            AttentionParams.zeros(score_dim, hidden),
            LstmCellParams.zeros(hidden, hidden),
            AttentionParams.zeros(score_dim, hidden),
            np.zeros((dense_units, hidden)), np.zeros(dense_units),
            np.zeros(dense_units), np.zeros(()),
        )

    @classmethod
    def init(cls, input_dim: int, hidden: int = 10, score_dim: int = 10,
             dense_units: int = 10, seed: int = 0) -> "ModelParams":
        """Glorot-uniform weights, zero biases, drawn in a fixed order."""
        rng = np.random.default_rng(seed)
        return cls(
            LstmCellParams.glorot(rng, hidden, input_dim),
            AttentionParams.glorot(rng, score_dim, hidden),
            LstmCellParams.glorot(rng, hidden, hidden),
            AttentionParams.glorot(rng, score_dim, hidden),
            glorot_uniform(rng, dense_units, hidden), np.zeros(dense_units),
            glorot_uniform(rng, 1, dense_units, shape=(dense_units,)), np.zeros(()),
            rng_seed=seed,
        )

    def n_parameters(self) -> int:
        return sum(arr.size for _, arr in self.tensors())

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for name, arr in self.tensors():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "dims": self.dims(),
            "rng_seed": self.rng_seed,
            "tensors": {
                name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                for name, arr in self.tensors()
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ModelParams":
        params = cls.zeros(**payload["dims"])
        params.rng_seed = int(payload.get("rng_seed", 0))
        stored = payload["tensors"]
        for name, arr in params.tensors():
            entry = stored[name]
            if list(arr.shape) != list(entry["shape"]):
                raise ValueError(f"tensor {name}: shape {entry['shape']} != expected {list(arr.shape)}")
            arr[...] = np.asarray(entry["data"], dtype=np.float64).reshape(arr.shape)
        return params


# ---------------------------------------------------------------------------
# LSTM layer


class LstmCellState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


class GateCache(NamedTuple):
    z: np.ndarray       # [h_prev, x]
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray       # candidate cell values
    o: np.ndarray
    c_prev: np.ndarray
    tanh_c: np.ndarray


def lstm_cell_forward(params: LstmCellParams, x, prev: LstmCellState):
    """One LSTM step. ``x`` is (input_dim,) or (batch, input_dim).

    Returns the new state and the gate activations needed for backprop.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.input_dim:
        raise ValueError(f"input has {x.shape[-1]} features, cell expects {params.input_dim}")
    if prev.h.shape[-1] != params.hidden or prev.c.shape[-1] != params.hidden:
        raise ValueError("state size does not match cell hidden size")
    _check_finite(x, "LSTM input")
    z = np.concatenate([prev.h, x], axis=-1)
    f = expit(z @ params.W_f.T + params.b_f)
    i = expit(z @ params.W_i.T + params.b_i)
    g = np.tanh(z @ params.W_C.T + params.b_C)
    o = expit(z @ params.W_o.T + params.b_o)
    c = f * prev.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return LstmCellState(h, c), GateCache(z, f, i, g, o, prev.c, tanh_c)


def lstm_layer_forward(params: LstmCellParams, xs):
    """Run a cell over ``xs`` (batch, L, input) from a zero state; returns (batch, L, hidden)."""
    batch, steps, _ = xs.shape
    state = LstmCellState(np.zeros((batch, params.hidden)), np.zeros((batch, params.hidden)))
    hs = np.empty((batch, steps, params.hidden))
    caches = []
    for t in range(steps):
        state, cache = lstm_cell_forward(params, xs[:, t], state)
        hs[:, t] = state.h
        caches.append(cache)
    return hs, caches


def lstm_layer_backward(params: LstmCellParams, caches, d_hs):
    """Backprop through time. ``d_hs`` is dLoss/dh_t from layers above."""
    grads = params.zeros_like()
    hidden = params.hidden
    batch, steps, _ = d_hs.shape
    d_xs = np.empty((batch, steps, params.input_dim))
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in reversed(range(steps)):
        cache = caches[t]
        dh = d_hs[:, t] + dh_next
        do = dh * cache.tanh_c
        dc = dh * cache.o * (1.0 - cache.tanh_c**2) + dc_next
        df = dc * cache.c_prev
        di = dc * cache.g
        dg = dc * cache.i
        dc_next = dc * cache.f

        da_f = df * cache.f * (1.0 - cache.f)
        da_i = di * cache.i * (1.0 - cache.i)
        da_g = dg * (1.0 - cache.g**2)
        da_o = do * cache.o * (1.0 - cache.o)

        grads.W_f += da_f.T @ cache.z
        grads.W_i += da_i.T @ cache.z
        grads.W_C += da_g.T @ cache.z
        grads.W_o += da_o.T @ cache.z
        grads.b_f += da_f.sum(axis=0)
        grads.b_i += da_i.sum(axis=0)
        grads.b_C += da_g.sum(axis=0)
        grads.b_o += da_o.sum(axis=0)

        dz = da_f @ params.W_f + da_i @ params.W_i + da_g @ params.W_C + da_o @ params.W_o
        dh_next = dz[:, :hidden]
        d_xs[:, t] = dz[:, hidden:]
    return grads, d_xs


# ---------------------------------------------------------------------------
# attention


class AttentionCache(NamedTuple):
    hs: np.ndarray
    u: np.ndarray
    alpha: np.ndarray


def attention_forward(params: AttentionParams, hidden_seq):
    """Additive attention that keeps the sequence shape.

    Scores ``e_t = v_a . tanh(W_a h_t + b_a)`` are softmax-normalised over
    time and each step is reweighted: ``out_t = alpha_t * h_t``. Accepts
    (L, hidden) or (batch, L, hidden).
    """
    hs = np.asarray(hidden_seq, dtype=np.float64)
    single = hs.ndim == 2
    if single:
        hs = hs[None]
    if hs.shape[-1] != params.W_a.shape[1]:
        raise ValueError(f"attention expects hidden size {params.W_a.shape[1]}, got {hs.shape[-1]}")
    if hs.shape[1] < 1:
        raise ValueError("attention needs at least one time step")
    u = np.tanh(hs @ params.W_a.T + params.b_a)
    e = u @ params.v_a
    e = e - e.max(axis=1, keepdims=True)
    w = np.exp(e)
    alpha = w / w.sum(axis=1, keepdims=True)
    out = alpha[..., None] * hs
    cache = AttentionCache(hs, u, alpha)
    if single:
        return out[0], AttentionCache(hs[0], u[0], alpha[0])
    return out, cache


def attention_backward(params: AttentionParams, cache: AttentionCache, d_out):
    hs, u, alpha = cache
    d_alpha = np.sum(d_out * hs, axis=-1)
    d_hs = alpha[..., None] * d_out
    d_e = alpha * (d_alpha - np.sum(alpha * d_alpha, axis=1, keepdims=True))
    d_pre = d_e[..., None] * params.v_a * (1.0 - u**2)
    grads = AttentionParams(
        W_a=np.einsum("bts,bth->sh", d_pre, hs),
        v_a=np.einsum("bt,bts->s", d_e, u),
        b_a=d_pre.sum(axis=(0, 1)),
    )
    d_hs = d_hs + d_pre @ params.W_a
    return grads, d_hs


# ---------------------------------------------------------------------------
# full model


@dataclass
class ForwardCache:
    lstm1: list
    attn1: AttentionCache
    lstm2: list
    attn2: AttentionCache
    pooled: np.ndarray
    dense: np.ndarray
    pred: np.ndarray


def forward_batch(params: ModelParams, windows):
    """Predictions for ``windows`` of shape (batch, L, K)."""
    xs = np.asarray(windows, dtype=np.float64)
    if xs.ndim != 3 or xs.shape[2] != params.input_dim:
        raise ValueError(f"expected windows (batch, L, {params.input_dim}), got {xs.shape}")
    if xs.shape[1] < 1:
        raise ValueError("window must have at least one time step")
    h1, c1 = lstm_layer_forward(params.lstm1, xs)
    _check_finite(h1, "lstm1")
    a1, ac1 = attention_forward(params.attn1, h1)
    _check_finite(a1, "attn1")
    h2, c2 = lstm_layer_forward(params.lstm2, a1)
    _check_finite(h2, "lstm2")
    a2, ac2 = attention_forward(params.attn2, h2)
    _check_finite(a2, "attn2")
    pooled = a2.sum(axis=1)
    dense = np.tanh(pooled @ params.dense_W.T + params.dense_b)
    _check_finite(dense, "dense")
    pred = dense @ params.out_W + params.out_b
    _check_finite(pred, "output")
    return pred, ForwardCache(c1, ac1, c2, ac2, pooled, dense, pred)


def backward_batch(params: ModelParams, cache: ForwardCache, labels, loss_scale: float = 1.0) -> ModelParams:
    """Gradients of ``loss_scale * mean((pred - label)**2)`` over the batch."""
    labels = np.asarray(labels, dtype=np.float64).reshape(cache.pred.shape)
    batch = labels.shape[0]
    d_pred = loss_scale * 2.0 * (cache.pred - labels) / batch

    d_out_W = cache.dense.T @ d_pred
    d_out_b = np.asarray(d_pred.sum())
    d_dense = np.outer(d_pred, params.out_W) * (1.0 - cache.dense**2)
    d_dense_W = d_dense.T @ cache.pooled
    d_dense_b = d_dense.sum(axis=0)
    d_pooled = d_dense @ params.dense_W

    steps = cache.attn2.hs.shape[1]
    d_a2 = np.repeat(d_pooled[:, None, :], steps, axis=1)
    g_attn2, d_h2 = attention_backward(params.attn2, cache.attn2, d_a2)
    g_lstm2, d_a1 = lstm_layer_backward(params.lstm2, cache.lstm2, d_h2)
    g_attn1, d_h1 = attention_backward(params.attn1, cache.attn1, d_a1)
    g_lstm1, _ = lstm_layer_backward(params.lstm1, cache.lstm1, d_h1)

    grads = ModelParams(g_lstm1, g_attn1, g_lstm2, g_attn2,
                        d_dense_W, d_dense_b, d_out_W, d_out_b, params.rng_seed)
    for name, arr in grads.tensors():
        _check_finite(arr, f"gradient {name}")
    return grads


def model_forward(params: ModelParams, window):
    """Scalar prediction for one (L, K) window, plus the forward cache."""
    w = np.asarray(window, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError(f"window must be 2-D (L, K), got shape {w.shape}")
    pred, cache = forward_batch(params, w[None])
    return float(pred[0]), cache


def model_backward(params: ModelParams, window, label: float, loss_scale: float = 1.0) -> ModelParams:
    """Gradient of ``loss_scale * (pred - label)**2`` for a single window."""
    _, cache = model_forward(params, window)
    return backward_batch(params, cache, [label], loss_scale)


def mse_loss(params: ModelParams, windows, labels) -> float:
    pred, _ = forward_batch(params, windows)
    return float(np.mean((pred - np.asarray(labels)) ** 2))


def predict(params: ModelParams, windows, batch_size: int = 1024) -> np.ndarray:
    xs = np.asarray(windows, dtype=np.float64)
    out = [forward_batch(params, xs[s:s + batch_size])[0] for s in range(0, xs.shape[0], batch_size)]
    return np.concatenate(out) if out else np.empty(0)


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    t: int = 0

    @classmethod
    def zeros(cls, params: ModelParams) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              t: Optional[int] = None):
    """One Adam update with bias correction. Inputs are not modified.

    ``t`` defaults to ``state.t + 1``.
    """
    step = state.t + 1 if t is None else int(t)
    if step < 1:
        raise ValueError("Adam step counter must be >= 1")
    m = state.m.map(lambda m_, g: beta1 * m_ + (1.0 - beta1) * g, grads)
    v = state.v.map(lambda v_, g: beta2 * v_ + (1.0 - beta2) * (g * g), grads)
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    new = params.map(lambda p, m_, v_: p - lr * (m_ / bc1) / (np.sqrt(v_ / bc2) + eps), m, v)
    for name, arr in new.tensors():
        _check_finite(arr, f"Adam update of {name}")
    return new, AdamState(m, v, step)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.1
    patience: int = 20
    hidden: int = 10
    score_dim: int = 10
    dense_units: int = 10

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and patience >= 1 required")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class TrainResult:
    params: ModelParams
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def history_rows(self):
        for epoch, (tr, va) in enumerate(zip(self.train_loss, self.val_loss)):
            yield epoch, tr, va


def train(params: ModelParams, dataset, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Mini-batch Adam on mean squared error with early stopping.

    The chronological tail (``validation_fraction``) of ``dataset`` is held
    out; batches are shuffled within the remaining head with a seeded RNG.
    Loss history entry 0 is the untrained model; the parameters returned
    are those of the best validation epoch.
    """
    features = np.asarray(dataset.features, dtype=np.float64)
    labels = np.asarray(dataset.labels, dtype=np.float64)
    n = labels.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    n_val = int(math.floor(n * config.validation_fraction))
    if n - n_val < 1:
        n_val = 0
    n_fit = n - n_val
    x_fit, y_fit = features[:n_fit], labels[:n_fit]
    x_val, y_val = features[n_fit:], labels[n_fit:]

    def val_loss(p):
        return mse_loss(p, x_val, y_val) if n_val else mse_loss(p, x_fit, y_fit)

    rng = np.random.default_rng(config.seed)
    opt = AdamState.zeros(params)
    current = params.copy()
    result = TrainResult(params=current.copy())
    result.train_loss.append(mse_loss(current, x_fit, y_fit))
    result.val_loss.append(val_loss(current))
    best = result.val_loss[0]
    stale = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n_fit)
        batch_losses = []
        for start in range(0, n_fit, config.batch_size):
            idx = order[start:start + config.batch_size]
            try:
                pred, cache = forward_batch(current, x_fit[idx])
                batch_losses.append(float(np.mean((pred - y_fit[idx]) ** 2)) * idx.size)
                grads = backward_batch(current, cache, y_fit[idx])
                current, opt = adam_step(current, grads, opt, config.lr,
                                         config.beta1, config.beta2, config.eps)
            except NonFiniteError as exc:
                raise TrainingDivergedError(f"training diverged in epoch {epoch}: {exc}") from exc
        tr = sum(batch_losses) / n_fit
        va = val_loss(current)
        if not (math.isfinite(tr) and math.isfinite(va)):
            raise TrainingDivergedError(f"training diverged in epoch {epoch}: loss {tr}, {va}")
        result.train_loss.append(tr)
        result.val_loss.append(va)
        if va < best:
            best, stale = va, 0
            result.params = current.copy()
            result.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
                break
    return result


def params_to_json(params: ModelParams) -> str:
    return json.dumps(params.to_dict())


def params_from_json(text: str) -> ModelParams:
    return ModelParams.from_dict(json.loads(text))
