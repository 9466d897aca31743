"""Rolling-average base rate."""
from __future__ import annotations

import numpy as np

from ..errors import UnfitModel, WindowTooLarge
from .series import SeriesLike, as_array


def rolling_average_forecast(series: SeriesLike, window: int, horizon: int) -> np.ndarray:
    """Predict the mean of the last ``window`` observations for every step ahead.

    Forecasts are not fed back, so all ``horizon`` values are equal.
    """
    y = as_array(series)
    if horizon < 1:
        raise UnfitModel("horizon must be >= 1")
    if window < 1 or window > len(y):
        raise WindowTooLarge(f"window {window} does not fit a series of length {len(y)}")
    return np.full(horizon, float(np.mean(y[-window:])))
