import numpy as np
import pytest

from sttf.baselines import (ArimaModel, ArModel, css_residuals, difference, evaluate_baselines,
                            fit_ar, fit_arima, make_invertible, naive_forecast, naive_trace,
                            rolling_forecast, select_order)
from sttf.metrics import mape, rmse
from sttf.synthetic import traffic_like_series


def simulate_ar(phi, n, seed, c=0.0, sigma=1.0, burn=200):
    rng = np.random.default_rng(seed)
    e = sigma * rng.standard_normal(n + burn)
    x = np.zeros(n + burn)
    for t in range(len(phi), n + burn):
        x[t] = c + sum(phi[i] * x[t - 1 - i] for i in range(len(phi))) + e[t]
    return x[burn:]


def simulate_arma11(phi, theta, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n + 200)
    x = np.zeros(n + 200)
    for t in range(1, n + 200):
        x[t] = phi * x[t - 1] + e[t] + theta * e[t - 1]
    return x[200:]


def test_naive():
    assert naive_forecast([5]) == 5
    assert naive_forecast([1, 2, 3]) == 3
    rng = np.random.default_rng(0)
    h = rng.standard_normal(17)
    assert naive_forecast(h) == h[-1]
    with pytest.raises(ValueError):
        naive_forecast([])


def test_noiseless_ar1_exact():
    x = 100 * 0.8 ** np.arange(200)
    m = fit_ar(x, 1)
    assert abs(m.phi[0] - 0.8) < 1e-8
    assert abs(m.intercept) < 1e-8


def test_constant_series_falls_back_to_intercept():
    m = fit_ar(np.full(50, 7.0), 2)
    assert np.all(m.phi == 0) and m.intercept == 7.0
    preds = rolling_forecast(m, np.full(5, 7.0), np.full(50, 7.0))
    assert np.all(preds == 7.0)


def test_ar2_recovery():
    x = simulate_ar([0.5, -0.3], 5000, seed=1)
    m = fit_ar(x, 2)
    assert np.all(np.abs(m.phi - [0.5, -0.3]) < 0.05)


def test_fit_ar_errors():
    with pytest.raises(ValueError):
        fit_ar(np.arange(12.0), 1)
    with pytest.raises(ValueError):
        fit_ar(np.arange(100.0), -1)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_arima_p00_is_ar(p):
    x = simulate_ar([0.6, -0.2], 800, seed=p, c=3.0)
    a, b = fit_ar(x, p), fit_arima(x, p, 0, 0)
    assert np.array_equal(a.phi, b.phi) and a.intercept == b.intercept
    assert b.theta.size == 0


def test_arima_d1_recovers_ar():
    # x is the running sum of 0.5 + u, u an AR(1) with phi 0.6
    u = simulate_ar([0.6], 5000, seed=4)
    x = np.cumsum(0.5 + u)
    m = fit_arima(x, 1, 1, 0)
    assert abs(m.phi[0] - 0.6) < 0.05


def test_arima_trend_recursion_exact():
    t = np.arange(400, dtype=float)
    x = 10 + 0.3 * t + 50 * 0.9 ** t
    m = fit_arima(x[:300], 1, 1, 0)
    preds = rolling_forecast(m, x[300:], x[:300])
    assert np.max(np.abs(preds - x[300:])) < 1e-6


def test_arma11_recovery():
    x = simulate_arma11(0.6, 0.5, 5000, seed=3)
    m = fit_arima(x, 1, 0, 1)
    assert abs(m.phi[0] - 0.6) < 0.05
    assert abs(m.theta[0] - 0.5) < 0.05
    # innovations of the fitted model are close to the true unit-variance noise
    assert abs(np.std(css_residuals(x, m.phi, m.theta, m.intercept)) - 1) < 0.05


def test_refinement_never_hurts():
    x = traffic_like_series(1500, seed=1).values
    w = difference(x, 1)
    two_stage = fit_arima(x, 2, 1, 2, refine=False)
    refined = fit_arima(x, 2, 1, 2)

    def css(m):
        return np.sum(css_residuals(w, m.phi, m.theta, m.intercept) ** 2)

    assert css(refined) <= css(two_stage)


def test_make_invertible():
    # 1 + 2.5 z + z^2 = (1 + 0.5 z)(1 + 2 z): the root -0.5 reflects to -2
    np.testing.assert_allclose(make_invertible([2.5, 1.0]), [1.0, 0.25], atol=1e-12)
    np.testing.assert_allclose(make_invertible([2.0]), [0.5], atol=1e-12)
    assert np.array_equal(make_invertible([0.3, 0.1]), [0.3, 0.1])
    roots = np.roots(np.r_[1.0, make_invertible([-1.9, 0.99])][::-1])
    assert np.all(np.abs(roots) > 1)


def test_arima_validation():
    with pytest.raises(ValueError):
        fit_arima(np.arange(100.0), 1, 3, 0)
    with pytest.raises(ValueError):
        fit_arima(np.arange(20.0), 2, 0, 2)
    with pytest.raises(ValueError):
        ArimaModel(1, 0, 0, [np.nan])
    with pytest.raises(ValueError):
        ArModel([1.0], float("inf"), 1)


def test_rolling_intercept_only():
    m = ArModel(np.zeros(0), 4.2, 0)
    preds = rolling_forecast(m, np.arange(10.0), np.ones(5))
    assert np.all(preds == 4.2)


def test_random_walk_model_is_persistence():
    rng = np.random.default_rng(2)
    hist, test = rng.standard_normal(50), rng.standard_normal(30)
    preds = rolling_forecast(ArModel(np.array([1.0]), 0.0, 1), test, hist)
    assert np.array_equal(preds, naive_trace(test, hist))
    assert preds[0] == hist[-1]


def test_true_model_errors_are_white():
    x = simulate_ar([0.5, -0.3], 3000, seed=6)
    preds = rolling_forecast(ArModel(np.array([0.5, -0.3]), 0.0, 2), x[2000:], x[:2000])
    err = x[2000:] - preds
    rho = np.corrcoef(err[:-1], err[1:])[0, 1]
    assert abs(rho) < 0.1
    assert abs(np.std(err) - 1) < 0.1


def test_rolling_uses_only_past_values():
    x = simulate_arma11(0.6, 0.5, 600, seed=7)
    m = fit_arima(x[:400], 1, 0, 1)
    a = rolling_forecast(m, x[400:], x[:400])
    changed = x[400:].copy()
    changed[100:] += 50.0
    b = rolling_forecast(m, changed, x[:400])
    assert np.array_equal(a[:101], b[:101]) and not np.array_equal(a[101:], b[101:])


def test_recursive_mode_ignores_test_values():
    x = traffic_like_series(1200, seed=3).values
    m = fit_arima(x[:900], 2, 1, 2)
    a = rolling_forecast(m, x[900:], x[:900], recursive=True)
    b = rolling_forecast(m, np.zeros(300), x[:900], recursive=True)
    assert np.array_equal(a, b)


def test_select_order_in_grid():
    x = simulate_arma11(0.6, 0.5, 2000, seed=8)
    p, q = select_order(x, 0, max_p=3, max_q=3)
    assert 1 <= p <= 3 and 1 <= q <= 3


def test_evaluate_baselines_matches_recomputation():
    s = traffic_like_series(1600, seed=2)
    reports = evaluate_baselines(s, train_fraction=0.75)
    assert [r.model_name for r in reports] == ["Naive", "AR(2)", "ARMA", "ARIMA"]
    x = s.values
    tail = x[1200:]
    naive = reports[0]
    assert naive.n == 400
    assert naive.predictions == x[1199:-1].tolist()
    for r in reports:
        assert r.labels == tail.tolist()
        assert r.rmse == rmse(tail, r.predictions)
        assert r.mape_percent == mape(tail, r.predictions)
    ar = rolling_forecast(fit_ar(x[:1200], 2), tail, x[:1200])
    assert reports[1].predictions == ar.tolist()


def test_evaluate_baselines_options():
    s = traffic_like_series(900, seed=5)
    (grid,) = evaluate_baselines(s, ["arma"], grid_search=True)
    assert grid.model_name == "ARMA" and np.isfinite(grid.rmse)
    with pytest.raises(ValueError):
        evaluate_baselines(s, ["prophet"])
