"""Lead/lag alignment of an exogenous signal by cross-correlation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConstantSeries, SeriesTooShort
from .series import SeriesLike, TimeSeries, as_array

_TIE_TOL = 1e-12


@dataclass
class Alignment:
    lag: int
    correlation: float
    profile: dict

    def to_dict(self) -> dict:
        return {"lag": self.lag, "correlation": self.correlation,
                "profile": {str(k): v for k, v in self.profile.items()}}


def _overlap(target: SeriesLike, exog: SeriesLike):
    if isinstance(target, TimeSeries) and isinstance(exog, TimeSeries):
        start = max(target.start_date, exog.start_date)
        end = min(target.end_date, exog.end_date)
        if end < start:
            raise SeriesTooShort("target and exogenous series do not overlap")
        return target.window(start, end).values, exog.window(start, end).values
    y, x = as_array(target), as_array(exog)
    n = min(len(y), len(x))
    return y[:n], x[:n]


def align_exogenous(target: SeriesLike, exog: SeriesLike, max_lag: int) -> Alignment:
    """Pick the lead of ``exog`` over ``target`` that maximizes |Pearson correlation|.

    For lag L the pairs are (target[t], exog[t - L]) over the overlapping
    dates. Ties (within 1e-12) go to the smaller lag.
    """
    y, x = _overlap(target, exog)
    n = len(y)
    if max_lag < 0 or max_lag >= n / 2:
        raise SeriesTooShort(f"max_lag {max_lag} needs an overlap longer than {2 * max_lag} days")
    if np.ptp(y) == 0 or np.ptp(x) == 0:
        raise ConstantSeries("correlation is undefined for a constant series")
    profile = {}
    for lag in range(max_lag + 1):
        a, b = y[lag:], x[: n - lag]
        if np.ptp(a) == 0 or np.ptp(b) == 0:
            profile[lag] = float("nan")
            continue
        profile[lag] = float(np.corrcoef(a, b)[0, 1])
    valid = {k: v for k, v in profile.items() if np.isfinite(v)}
    if not valid:
        raise ConstantSeries("no lag gives a defined correlation")
    # correlations equal up to rounding count as ties
    top = max(abs(v) for v in valid.values())
    best = min(k for k, v in valid.items() if abs(v) >= top - _TIE_TOL)
    return Alignment(best, valid[best], profile)
