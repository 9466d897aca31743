import datetime as dt
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ransomcast.errors import ConstantSeries, LengthMismatch, MaseUndefined, SeriesTooShort, WindowTooLarge
from ransomcast.forecasting.align import align_exogenous
from ransomcast.forecasting.baseline import rolling_average_forecast
from ransomcast.forecasting.metrics import evaluate, mase_scale
from ransomcast.forecasting.series import TimeSeries, read_series_csv, series_to_csv_text

D = dt.date


# --- metrics ----------------------------------------------------------------------


def test_evaluate_hand_arithmetic():
    ev = evaluate([3, 5, 4], [4, 4, 4])
    assert abs(ev.mae - 2 / 3) < 1e-9
    assert abs(ev.rmse - math.sqrt(2 / 3)) < 1e-9
    assert abs(ev.mase - 4 / 9) < 1e-9


def test_evaluate_perfect_and_errors():
    ev = evaluate([1, 4, 2], [1, 4, 2])
    assert ev.mae == ev.rmse == ev.mase == 0
    with pytest.raises(MaseUndefined):
        evaluate([2, 2, 2], [1, 2, 3])
    assert evaluate([2, 2, 2], [1, 2, 3], require_mase=False).mase is None
    with pytest.raises(LengthMismatch):
        evaluate([1, 2], [1])
    with pytest.raises(LengthMismatch):
        evaluate([], [])
    with pytest.raises(MaseUndefined):
        mase_scale([4.0])


@given(arrays(float, st.integers(1, 50), elements=st.floats(-1e6, 1e6)))
def test_rmse_at_least_mae(err):
    ev = evaluate(err, np.zeros_like(err), require_mase=False)
    assert ev.rmse >= ev.mae >= 0


# --- base rate ---------------------------------------------------------------------


def test_rolling_average_examples():
    assert rolling_average_forecast([1, 2, 3, 4], 2, 3).tolist() == [3.5, 3.5, 3.5]
    assert rolling_average_forecast([1, 2, 3, 9], 1, 2).tolist() == [9, 9]
    assert rolling_average_forecast([1, 2, 3, 6], 4, 1).tolist() == [3.0]
    with pytest.raises(WindowTooLarge):
        rolling_average_forecast([1, 2], 3, 1)


@given(arrays(float, st.integers(1, 30), elements=st.floats(0, 1e4)), st.integers(1, 30), st.integers(1, 10))
def test_rolling_average_non_negative(y, w, h):
    w = min(w, len(y))
    fc = rolling_average_forecast(y, w, h)
    assert len(fc) == h and np.all(fc >= 0)


# --- alignment -------------------------------------------------------------------------


def test_alignment_planted_lead():
    rng = np.random.default_rng(0)
    x = rng.poisson(5, 503).astype(float)
    target = TimeSeries(D(2017, 1, 4), x[:500], "y")
    exog = TimeSeries(D(2017, 1, 1), x[:500], "x")  # three days ahead of the target
    a = align_exogenous(target, exog, 10)
    assert a.lag == 3 and a.correlation > 0.95
    assert set(a.profile) == set(range(11))


def test_alignment_independent_noise():
    rng = np.random.default_rng(1)
    a = align_exogenous(rng.normal(10, 1, 500), rng.normal(10, 1, 500), 10)
    assert abs(a.correlation) < 0.2


def test_alignment_errors_and_ties():
    with pytest.raises(ConstantSeries):
        align_exogenous([1.0, 2.0, 3.0, 1.0, 2.0, 5.0], [4.0] * 6, 2)
    with pytest.raises(SeriesTooShort):
        align_exogenous([1.0, 2.0, 3.0, 4.0], [1.0, 3.0, 2.0, 4.0], 2)
    # period-2 signal: lags 0 and 2 give the same |correlation|, the smaller wins
    y = np.tile([1.0, 3.0], 20)
    assert align_exogenous(y, y, 4).lag == 0


# --- series files ----------------------------------------------------------------------


def test_series_csv_round_trip():
    s = TimeSeries(D(2017, 2, 27), [0, 3, 1.5, 2], "det")
    text = series_to_csv_text(s)
    assert text.splitlines()[:2] == ["date,value", "2017-02-27,0"]
    assert read_series_csv(io.StringIO(text), "det") == s


def test_series_validation():
    with pytest.raises(ValueError):
        TimeSeries(D(2017, 1, 1), [1.0, -1.0])
    with pytest.raises(ValueError):
        read_series_csv(io.StringIO("date,value\n2017-01-01,1\n2017-01-03,2\n"))
    s = TimeSeries(D(2017, 1, 1), np.arange(10.0))
    assert s.window(D(2017, 1, 3), D(2017, 1, 4)).values.tolist() == [2, 3]
    with pytest.raises(SeriesTooShort):
        s.window(D(2016, 12, 31), D(2017, 1, 2))
    with pytest.raises(ValueError):
        s.values[0] = 5
