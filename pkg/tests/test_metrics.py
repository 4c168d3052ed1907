import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from damvol.metrics import (
    EvalResult, comparison_report, evaluate, format_table, r2, residual_bins, rmse,
    write_plot_csv,
)

OBS = [100.0, 200.0, 300.0]
PRED = [110.0, 190.0, 310.0]


def test_rmse_oracle():
    # squared errors are all 100
    assert rmse(OBS, PRED) == 10.0
    assert rmse(OBS, OBS) == 0.0
    assert rmse([5.0], [7.0]) == 2.0


def test_r2_oracle():
    # SSE 300, SST 20000
    assert r2(OBS, PRED) == 0.985
    assert r2(OBS, [200.0] * 3) == 0.0
    assert r2(OBS, OBS) == 1.0


def test_errors():
    with pytest.raises(ValueError):
        rmse([1, 2], [1])
    with pytest.raises(ValueError):
        rmse([], [])
    with pytest.raises(ValueError, match="undefined"):
        r2([3, 3, 3], [1, 2, 3])


finite = st.floats(-1e4, 1e4, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=2, max_size=40), st.floats(-1e3, 1e3))
def test_rmse_translation(y, c):
    y = np.array(y)
    assert rmse(y, y + c) == pytest.approx(abs(c), rel=1e-9, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=40), st.floats(-1e3, 1e3))
def test_r2_shift_invariant(pairs, c):
    obs = np.array([p[0] for p in pairs])
    pred = np.array([p[1] for p in pairs])
    if np.ptp(obs) < 1e-3:
        return
    assert r2(obs + c, pred + c) == pytest.approx(r2(obs, pred), rel=1e-6, abs=1e-6)


def test_r2_mean_predictor_exactly_zero():
    y = np.array([1.0, 4.0, 9.0, 16.0])
    assert r2(y, np.full(4, y.mean())) == 0.0


def test_bins_zero_residuals():
    b = residual_bins(OBS, OBS)
    assert np.all(b.mean_residual[b.count > 0] == 0)


def test_bins_split_at_median():
    rng = np.random.default_rng(0)
    for n in (7, 8, 15):
        obs = rng.permutation(np.arange(n, dtype=float) * 3 + 1)
        med = np.median(obs)
        edges = [obs.min(), med, obs.max()]
        b = residual_bins(obs, obs - 1, edges)
        # oracle: explicit assignment
        lower = sum(1 for o in obs if o < med)
        assert b.count.tolist() == [lower, n - lower]
        assert sorted(b.count.tolist()) == sorted([n // 2, -(-n // 2)])


def test_single_bin_reproduces_mean():
    obs = np.array([10.0, 20.0, 40.0])
    pred = np.array([12.0, 18.0, 30.0])
    b = residual_bins(obs, pred, [10.0, 40.0])
    assert b.mean_residual[0] == pytest.approx(np.mean(obs - pred))


def test_bins_out_of_coverage():
    with pytest.raises(ValueError):
        residual_bins([1.0, 5.0], [1.0, 5.0], [2.0, 6.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 500), st.floats(0, 500)), min_size=2, max_size=60))
def test_bins_aggregate(pairs):
    obs = np.array([p[0] for p in pairs])
    pred = np.array([p[1] for p in pairs])
    b = residual_bins(obs, pred)
    assert b.count.sum() == obs.size
    live = b.count > 0
    weighted = np.sum(b.mean_residual[live] * b.count[live]) / obs.size
    assert weighted == pytest.approx(np.mean(obs - pred), abs=1e-10 * max(1, np.abs(obs - pred).max()))


TABLE4 = [("rf_base", 45.77, 0.58), ("rf_full_capacity", 13.86, 0.93),
          ("rf_geographical", 13.86, 0.93), ("rf_full_elevation", 13.86, 0.93),
          ("elasticnet", 8.36, 0.983), ("lasso", 8.361, 0.983), ("ridge", 8.228, 0.983),
          ("blend_244", 5.02, 0.99), ("blend_200", 4.88, 0.99)]


def test_report_pipeline_order():
    results = [EvalResult(n, e, r, 10) for n, e, r in TABLE4]
    shuffled = [results[i] for i in (8, 2, 6, 0, 4, 7, 1, 5, 3)]
    rep = comparison_report(shuffled)
    names = [r["model"] for r in rep["rows"]]
    # blends keep their input order
    assert names == [n for n, _, _ in TABLE4[:7]] + ["blend_200", "blend_244"]
    text = format_table(comparison_report(results))
    lines = text.splitlines()
    assert len(lines) == 2 + 9
    assert lines[2].split()[-2:] == ["45.77", "0.580"]
    assert "Lasso" in lines[7] and "8.36" in lines[7] and "0.983" in lines[7]
    json.dumps(rep)


def test_report_single_and_duplicates():
    assert len(comparison_report([EvalResult("ridge", 1, 0.5, 3)])["rows"]) == 1
    with pytest.raises(ValueError, match="duplicate"):
        comparison_report([EvalResult("ridge", 1, 0.5, 3), EvalResult("ridge", 2, 0.4, 3)])
    with pytest.raises(ValueError):
        comparison_report([])


def test_plot_csv(tmp_path):
    from datetime import date
    res = evaluate("ridge", OBS, PRED, [date(2020, 1, d) for d in (1, 2, 3)])
    path = tmp_path / "ridge.csv"
    write_plot_csv(res, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "date,observed_mcm,predicted_mcm,residual_mcm"
    assert lines[1] == "2020-01-01,100.0,110.0,-10.0"
