"""
Comparison models: persistence, AR(p) by least squares, ARIMA(p, d, q) by
two-stage (Hannan-Rissanen) regression polished by conditional least
squares, and the LSTM without EMD.

All forecasters are evaluated one step ahead with observed history unless
``recursive=True``, in which case they feed back their own predictions.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import lfilter
from scipy.special import comb

from .metrics import EvalReport, evaluate_predictions
from .timeseries import split_point

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArModel:
    phi: np.ndarray
    intercept: float
    p: int

    def __post_init__(self):
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=np.float64))
        if not (np.all(np.isfinite(self.phi)) and math.isfinite(self.intercept)):
            raise ValueError("AR coefficients must be finite")


@dataclass(frozen=True)
class ArimaModel:
    p: int
    d: int
    q: int
    phi: np.ndarray
    theta: np.ndarray = field(default_factory=lambda: np.empty(0))
    intercept: float = 0.0

    def __post_init__(self):
        if self.d not in (0, 1, 2):
            raise ValueError("d must be 0, 1 or 2")
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=np.float64))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64))
        if not (np.all(np.isfinite(self.phi)) and np.all(np.isfinite(self.theta))
                and math.isfinite(self.intercept)):
            raise ValueError("ARIMA coefficients must be finite")


Forecaster = Union[ArModel, ArimaModel]


def naive_forecast(history) -> float:
    h = np.asarray(history, dtype=np.float64)
    if h.size == 0:
        raise ValueError("empty history")
    return float(h[-1])


# ---------------------------------------------------------------------------
# estimation


def _lagged(x, p, start):
    """Columns x[t-1], ..., x[t-p] for t = start .. len(x)-1."""
    n = x.shape[0]
    return np.column_stack([x[start - i:n - i] for i in range(1, p + 1)]) if p else np.empty((n - start, 0))


def _ols(design, target):
    """Least squares with an intercept column appended; None if rank-deficient."""
    X = np.column_stack([design, np.ones(design.shape[0])])
    if X.shape[0] < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        return None
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    return coef[:-1], float(coef[-1])


def _fit_ar_arrays(x, p):
    fit = _ols(_lagged(x, p, p), x[p:])
    if fit is None:
        logger.warning("singular AR(%d) design; using an intercept-only model", p)
        return np.zeros(p), float(np.mean(x))
    return fit


def fit_ar(series, p: int) -> ArModel:
    """OLS regression of x_t on (x_{t-1} .. x_{t-p}, 1)."""
    x = np.asarray(getattr(series, "values", series), dtype=np.float64)
    if p < 0:
        raise ValueError("order must be non-negative")
    if x.size <= 3 * p + 10:
        raise ValueError(f"AR({p}) needs more than {3 * p + 10} samples, got {x.size}")
    phi, c = _fit_ar_arrays(x, p)
    return ArModel(phi, c, p)


def difference(x, d: int) -> np.ndarray:
    return np.diff(x, n=d) if d else np.asarray(x, dtype=np.float64)


def default_long_order(n: int, p: int, q: int) -> int:
    return int(min(max(2 * max(p, q), math.floor(math.log(n) ** 2)), n // 5))


def _hannan_rissanen(w, p, q, long_order=None):
    n = w.size
    if q == 0:
        phi, c = _fit_ar_arrays(w, p)
        return phi, np.empty(0), c, None
    m = long_order or default_long_order(n, p, q)
    # stage 1: long autoregression for innovation estimates
    long_phi, long_c = _fit_ar_arrays(w, m)
    resid = np.zeros(n)
    resid[m:] = w[m:] - (_lagged(w, m, m) @ long_phi + long_c)
    # stage 2: regress on own lags and lagged innovations
    start = m + q
    design = np.column_stack([_lagged(w, p, start), _lagged(resid, q, start)])
    fit = _ols(design, w[start:])
    if fit is None:
        logger.warning("singular ARMA(%d,%d) design; using an intercept-only model", p, q)
        return np.zeros(p), np.zeros(q), float(np.mean(w)), None
    coef, c = fit
    fitted = design @ coef + c
    return coef[:p], coef[p:], c, w[start:] - fitted


def css_residuals(w, phi, theta, c) -> np.ndarray:
    """Conditional one-step innovations of an ARMA model, zero before t = p.

    These are exactly the innovations :func:`rolling_forecast` accumulates
    over the history.
    """
    p = len(phi)
    u = w[p:] - c - (_lagged(w, p, p) @ phi if p else 0.0)
    return lfilter([1.0], np.r_[1.0, theta], u)


def _refine_css(w, phi, theta, c):
    """Minimise the conditional sum of squares starting from ``(phi, theta, c)``."""
    p = len(phi)
    start = np.r_[phi, theta, c]

    def resid(beta):
        r = css_residuals(w, beta[:p], beta[p:-1], beta[-1])
        return r if np.all(np.isfinite(r)) else np.full(r.shape, 1e150)

    base = float(np.sum(resid(start) ** 2))
    try:
        sol = least_squares(resid, start, method="lm", x_scale="jac")
    except (ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("CSS refinement failed (%s); keeping two-stage estimates", exc)
        return phi, theta, c
    if not (np.all(np.isfinite(sol.x)) and 2 * sol.cost < base):
        return phi, theta, c
    return sol.x[:p], sol.x[p:-1], float(sol.x[-1])


def fit_arima(series, p: int, d: int = 0, q: int = 0, long_order: Optional[int] = None,
              refine: bool = True) -> ArimaModel:
    """Difference ``d`` times, then fit ARMA(p, q) by least squares.

    Two-stage (Hannan-Rissanen) regression gives the starting values; with
    ``refine`` and ``q > 0`` they are polished by minimising the conditional
    sum of squared innovations. With ``q == 0`` this is exactly
    :func:`fit_ar` on the differenced series.
    """
    x = np.asarray(getattr(series, "values", series), dtype=np.float64)
    if min(p, d, q) < 0:
        raise ValueError("orders must be non-negative")
    if d not in (0, 1, 2):
        raise ValueError("d must be 0, 1 or 2")
    w = difference(x, d)
    need = 3 * (p + q) + 10 + (default_long_order(w.size, p, q) if q else 0)
    if w.size <= need:
        raise ValueError(f"ARIMA({p},{d},{q}) needs more than {need + d} samples, got {x.size}")
    phi, theta, c, _ = _hannan_rissanen(w, p, q, long_order)
    theta = make_invertible(theta)
    if q and refine:
        phi, theta, c = _refine_css(w, phi, theta, c)
        theta = make_invertible(theta)
    return ArimaModel(p, d, q, phi, theta, c)


def make_invertible(theta) -> np.ndarray:
    """Reflect roots of 1 + theta_1 z + ... + theta_q z^q that lie inside or
    on the unit circle, so the innovation recursion cannot blow up."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size == 0 or np.all(theta == 0):
        return theta
    roots = np.roots(np.r_[1.0, theta][::-1])
    small = np.abs(roots) <= 1.0
    if not small.any():
        return theta
    logger.info("reflecting %d non-invertible MA root(s)", int(small.sum()))
    roots = np.where(small, 1.0 / np.conj(roots), roots)
    # roots exactly on the circle stay there after reflection; nudge outward
    roots = np.where(np.abs(roots) <= 1.0, roots * 1.0001 / np.abs(roots), roots)
    poly = np.real(np.poly(roots))[::-1]          # lowest degree first
    return poly[1:] / poly[0]


def select_order(series, d: int = 0, max_p: int = 4, max_q: int = 4) -> tuple[int, int]:
    """Grid search p in 1..max_p, q in 1..max_q by AIC of the stage-2 fit."""
    w = difference(np.asarray(getattr(series, "values", series), dtype=np.float64), d)
    m = default_long_order(w.size, max_p, max_q)
    best, best_aic = (1, 1), math.inf
    for p, q in itertools.product(range(1, max_p + 1), range(1, max_q + 1)):
        _, _, _, resid = _hannan_rissanen(w, p, q, m)
        if resid is None:
            continue
        # score on a common sample so orders are comparable
        r = resid[max_q - q:]
        aic = r.size * math.log(float(np.mean(r**2))) + 2 * (p + q + 1)
        if aic < best_aic:
            best, best_aic = (p, q), aic
    return best


# ---------------------------------------------------------------------------
# forecasting


def _as_arima(model: Forecaster) -> ArimaModel:
    if isinstance(model, ArModel):
        return ArimaModel(model.p, 0, 0, model.phi, np.empty(0), model.intercept)
    return model


def _diff_weights(d):
    return np.array([(-1) ** k * comb(d, k, exact=True) for k in range(d + 1)], dtype=np.float64)


def rolling_forecast(model: Forecaster, test_series, history, recursive: bool = False) -> np.ndarray:
    """One prediction per element of ``test_series``.

    Prediction ``j`` uses only ``history`` and ``test_series[:j]`` (or, with
    ``recursive``, only ``history`` and earlier predictions).
    """
    m = _as_arima(model)
    hist = np.asarray(getattr(history, "values", history), dtype=np.float64)
    test = np.asarray(getattr(test_series, "values", test_series), dtype=np.float64)
    p, d, q = m.p, m.d, m.q
    if hist.size < p + d or hist.size < 1:
        raise ValueError(f"history of {hist.size} values is too short for order ({p},{d},{q})")

    n_h, n_t = hist.size, test.size
    xs = np.empty(n_h + n_t)
    xs[:n_h] = hist
    ws = np.full(n_h + n_t, np.nan)
    es = np.zeros(n_h + n_t)
    wts = _diff_weights(d)
    undiff = -wts[1:]               # x_t = w_t + sum_k undiff[k-1] * x_{t-k}

    def w_at(t):
        return float(wts @ xs[t - d:t + 1][::-1]) if t >= d else np.nan

    def one_step(t):
        w_hat = m.intercept
        for i in range(1, p + 1):
            w_hat += m.phi[i - 1] * ws[t - i]
        for i in range(1, q + 1):
            if t - i >= d:
                w_hat += m.theta[i - 1] * es[t - i]
        level = float(undiff @ xs[t - d:t][::-1]) if d else 0.0
        return w_hat, w_hat + level

    # innovations over the history
    for t in range(d, n_h):
        ws[t] = w_at(t)
        if t >= d + p:
            es[t] = ws[t] - one_step(t)[0]

    preds = np.empty(n_t)
    for j in range(n_t):
        t = n_h + j
        w_hat, x_hat = one_step(t)
        preds[j] = x_hat
        xs[t] = x_hat if recursive else test[j]
        ws[t] = w_at(t)
        es[t] = 0.0 if recursive else ws[t] - w_hat
    return preds


def naive_trace(test_series, history) -> np.ndarray:
    hist = np.asarray(getattr(history, "values", history), dtype=np.float64)
    test = np.asarray(getattr(test_series, "values", test_series), dtype=np.float64)
    if hist.size == 0:
        raise ValueError("empty history")
    return np.concatenate([hist[-1:], test[:-1]])


# ---------------------------------------------------------------------------
# evaluation helpers


DEFAULT_ORDERS = {"ARMA": (2, 0, 2), "ARIMA": (2, 1, 2)}


def evaluate_baselines(series, names=("naive", "AR", "ARMA", "ARIMA"), train_fraction: float = 2 / 3,
                       zero_policy: str = "skip", recursive: bool = False, ar_order: int = 2,
                       arma_order=(2, 2), arima_order=(2, 1, 2), grid_search: bool = False) -> list[EvalReport]:
    """Fit classical baselines on the training part and score the test part."""
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    n_train = split_point(values.size, train_fraction)
    head, tail = values[:n_train], values[n_train:]
    reports = []
    for name in names:
        key = name.upper()
        if key == "NAIVE":
            preds = naive_trace(tail, head)
            label = "Naive"
        elif key == "AR":
            preds = rolling_forecast(fit_ar(head, ar_order), tail, head, recursive)
            label = f"AR({ar_order})"
        elif key == "ARMA":
            p, q = select_order(head, 0) if grid_search else arma_order
            preds = rolling_forecast(fit_arima(head, p, 0, q), tail, head, recursive)
            label = "ARMA"
        elif key == "ARIMA":
            p, d, q = arima_order
            if grid_search:
                p, q = select_order(head, d)
            preds = rolling_forecast(fit_arima(head, p, d, q), tail, head, recursive)
            label = "ARIMA"
        else:
            raise ValueError(f"unknown baseline {name!r}")
        reports.append(evaluate_predictions(label, tail, preds, zero_policy))
    return reports


def fit_pure_lstm(series, **fit_kwargs):
    """The forecaster network fed the centred signal alone (no EMD)."""
    from .forecaster import fit
    fit_kwargs.setdefault("model_name", "LSTM")
    return fit(series, use_emd=False, **fit_kwargs)
