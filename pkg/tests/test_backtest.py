import datetime as dt
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ransomcast.errors import SeriesTooShort
from ransomcast.forecasting.arima import ExogenousSeries
from ransomcast.forecasting.backtest import (
    ArimaSpec,
    BacktestConfig,
    HmmSpec,
    backtest,
    window_plan,
)
from ransomcast.forecasting.series import TimeSeries
from ransomcast.synthetic import simulate_arx

D = dt.date


def fast_config(**kw):
    base = dict(
        hmm=HmmSpec(restarts=1, max_iters=100),
        arima=ArimaSpec(order=(1, 0, 0)),
        arimax=ArimaSpec(order=(1, 0, 0)),
    )
    base.update(kw)
    return BacktestConfig(**base)


def counts(T=100, seed=0):
    rng = np.random.default_rng(seed)
    return TimeSeries(D(2016, 8, 30), rng.poisson(4 + 3 * np.sin(np.arange(T) / 9)).astype(float), "det")


def test_window_plan_t100():
    n_train, windows = window_plan(100, 0.6, 7)
    assert n_train == 60
    assert [n for _, n in windows] == [7, 7, 7, 7, 7, 5]
    assert [s for s, _ in windows] == [60, 67, 74, 81, 88, 95]


@given(st.integers(10, 400), st.integers(1, 14))
def test_window_plan_covers_test_set(T, h):
    try:
        n_train, windows = window_plan(T, 0.6, h)
    except SeriesTooShort:
        assert T - int(0.6 * T + 1e-9) < h or int(0.6 * T + 1e-9) < 2
        return
    assert sum(n for _, n in windows) == T - n_train
    assert all(n == h for _, n in windows[:-1]) and 1 <= windows[-1][1] <= h


def test_too_short():
    with pytest.raises(SeriesTooShort):
        backtest(counts(12), None, fast_config())


def test_report_layout_without_exog():
    rep = backtest(counts(), None, fast_config())
    assert rep.models == ["baserate", "hmm", "arima"]
    table = rep.table()
    assert list(table) == ["MAE", "RMSE", "MASE"]
    assert list(table["MAE"]) == ["Baserate", "HMM_Poisson", "ARIMA"]
    assert all(len(rep.predictions[m]) == 40 for m in rep.models)
    assert rep.plot_csv().splitlines()[0] == "date,actual,baserate,hmm,arima"
    assert rep.plot_csv().splitlines()[1].startswith("2016-10-29,")
    doc = json.loads(json.dumps(rep.to_dict()))
    assert len(doc["windows"]) == 6 and doc["windows"][0]["start"] == "2016-10-29"
    assert len(doc["evaluations"]["hmm"]["per_window"]) == 6
    assert "MAE" in rep.text()
    for m in ("baserate", "hmm"):
        assert np.all(rep.predictions[m] >= 0)


def test_drift_series_favors_differenced_arima():
    y = np.arange(1.0, 101.0)
    rep = backtest(y, None, fast_config(models=("baserate", "arima"), arima=ArimaSpec(order=(0, 1, 0))))
    assert rep.evaluations["arima"].mae < rep.evaluations["baserate"].mae
    assert rep.evaluations["arima"].mae < 1e-6


def test_arimax_beats_arima_on_arx_data():
    y, x = simulate_arx(200, seed=3)
    rep = backtest(y, ExogenousSeries([x]), fast_config(models=("arima", "arimax")))
    assert rep.evaluations["arimax"].mae <= rep.evaluations["arima"].mae
    assert rep.exog_lag == 0 and rep.exog_persistence_days == 0


def test_exog_persistence_is_counted():
    y, x = simulate_arx(100, seed=4)
    short = TimeSeries(x.start_date, x.values[:97], "x")
    rep = backtest(y, ExogenousSeries([short]), fast_config(models=("arimax",)))
    assert rep.exog_persistence_days == 3
    assert np.all(np.isfinite(rep.predictions["arimax"]))


def test_backtest_deterministic():
    cfg = fast_config(arima=ArimaSpec(max_p=1, max_d=1, max_q=1))
    a = backtest(counts(seed=2), None, cfg)
    b = backtest(counts(seed=2), None, cfg)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
    assert a.plot_csv() == b.plot_csv()


def test_expanding_window_differs_only_in_training_span():
    s = counts(seed=5)
    sliding = backtest(s, None, fast_config(models=("baserate",), baserate_window=7))
    expanding = backtest(s, None, fast_config(models=("baserate",), baserate_window=7, window="expanding"))
    assert np.array_equal(sliding.predictions["baserate"], expanding.predictions["baserate"])


@settings(max_examples=6)
@given(st.integers(0, 5), st.sampled_from([0.0, 1e6]))
def test_no_look_ahead(window_index, sentinel):
    y, x = simulate_arx(100, seed=6)
    y = TimeSeries(y.start_date, np.round(y.values), "y")
    exog = ExogenousSeries([x])
    cfg = fast_config()
    base = backtest(y, exog, cfg)
    start, _ = base.windows[window_index]
    poisoned = y.values.copy()
    poisoned[start:] = sentinel
    rep = backtest(TimeSeries(y.start_date, poisoned, "y"), exog, cfg)
    upto = start - base.n_train + base.windows[window_index][1]
    for m in base.models:
        assert np.array_equal(rep.predictions[m][:upto], base.predictions[m][:upto]), m
