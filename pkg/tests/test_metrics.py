import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sttf.metrics import (PUBLISHED_REFERENCE, TABLE_FOOTER, EvalReport, comparison_csv,
                          comparison_table, evaluate_predictions, mape, parse_table,
                          published_reference_reports, rmse)


def two_pass_rmse(t, p):
    total = math.fsum((a - b) ** 2 for a, b in zip(t, p))
    return math.sqrt(total / len(t))


def two_pass_mape(t, p):
    terms = [abs(a - b) / abs(a) for a, b in zip(t, p) if a != 0]
    return 100.0 * math.fsum(terms) / len(terms)


def test_documented_examples():
    assert rmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert rmse([1, 2, 3], [2, 3, 4]) == 1.0
    assert mape([100, 200], [110, 180]) == 10.0
    assert mape([5, 7], [5, 7]) == 0.0


def test_zero_label_skip():
    r = evaluate_predictions("m", [0, 100], [5, 110], "skip")
    assert r.mape_percent == 10.0
    assert r.skipped_zero_count == 1
    assert r.n == 2


def test_zero_label_epsilon():
    # |0-5|/1 and |100-110|/100
    assert mape([0, 100], [5, 110], "epsilon") == pytest.approx(100 * (5 + 0.1) / 2, rel=1e-15)
    with pytest.raises(ValueError):
        mape([0, 0], [1, 1], "skip")
    with pytest.raises(ValueError):
        mape([1], [1], "ignore")


def test_all_zero_predictions():
    r = evaluate_predictions("zero", np.full(10, 100.0), np.zeros(10))
    assert (r.rmse, r.mape_percent) == (100.0, 100.0)


def test_input_errors():
    with pytest.raises(ValueError):
        rmse([1, 2], [1])
    with pytest.raises(ValueError):
        rmse([], [])
    with pytest.raises(ValueError):
        rmse([1, np.nan], [1, 2])


def test_random_sets_against_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 300))
        t = rng.uniform(-500, 1000, n)
        p = t + rng.normal(0, 30, n)
        assert rmse(t, p) == pytest.approx(two_pass_rmse(t, p), rel=1e-12)
        assert mape(t, p) == pytest.approx(two_pass_mape(t, p), rel=1e-12)


@settings(max_examples=60)
@given(st.lists(st.tuples(st.floats(-1e6, 1e6).map(lambda v: round(v, 3)), st.floats(-1e6, 1e6)),
                min_size=1, max_size=50))
def test_metric_properties(pairs):
    t = np.array([a for a, _ in pairs])
    p = np.array([b for _, b in pairs])
    r = rmse(t, p)
    assert r >= 0
    assert r == pytest.approx(two_pass_rmse(t, p), rel=1e-12, abs=1e-300)
    assert rmse(p, t) == r
    if np.any(t != 0):
        assert mape(t, p) >= 0


def test_report_json_round_trip():
    r = evaluate_predictions("STTF", [100.0, 120.0, 90.0], [101.0, 118.5, 95.0])
    d = json.loads(r.to_json())
    assert set(d) >= {"model_name", "rmse", "mape_percent", "n", "predictions", "labels"}
    assert EvalReport.from_dict(d) == r


def test_table_published_fixture():
    reports = [EvalReport("STTF", 16.25, 5.84, 0), EvalReport("STDN", 19.05, 15.60, 0)]
    text = comparison_table(reports)
    lines = text.splitlines()
    assert lines[2].split() == ["STTF", "16.25", "5.84"]
    assert lines[3].split() == ["STDN", "19.05", "15.60"]


def test_reference_rows():
    rows = {r.model_name: (r.rmse, r.mape_percent) for r in published_reference_reports()}
    assert rows["STTF"] == (16.25, 5.84)
    assert rows["LSTM"] == (57.53, 15.13)
    assert rows["ARIMA"] == (187.29, 96.42)
    assert rows["ARMA"] == (315.19, 73.51)
    assert len(PUBLISHED_REFERENCE) == 5


def test_single_row_and_footer():
    text = comparison_table([EvalReport("Naive", 0.0, 0.0, 3)], TABLE_FOOTER)
    assert text.rstrip().endswith(TABLE_FOOTER)
    assert parse_table(text) == [("Naive", 0.0, 0.0)]


def test_table_parse_round_trip():
    rng = np.random.default_rng(5)
    reports = [EvalReport(name, float(rng.uniform(0, 400)), float(rng.uniform(0, 100)), 10)
               for name in ("ARMA", "ARIMA", "AR(2)", "STTF (causal)")]
    parsed = parse_table(comparison_table(reports, TABLE_FOOTER))
    assert [p[0] for p in parsed] == [r.model_name for r in reports]
    for (_, r, m), rep in zip(parsed, reports):
        assert r == round(rep.rmse, 2) and m == round(rep.mape_percent, 2)
    with pytest.raises(ValueError):
        parse_table("no table here")


def test_csv_table():
    text = comparison_csv([EvalReport("AR(2)", 1.234, 5.678, 4, 1)])
    assert text.splitlines() == ["model,rmse,mape_percent,n,skipped_zero_count", "AR(2),1.23,5.68,4,1"]
