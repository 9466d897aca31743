"""Point-forecast error measures."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import LengthMismatch, MaseUndefined


@dataclass
class ForecastEvaluation:
    mae: float
    rmse: float
    mase: Optional[float]
    horizon: int = 0
    per_window: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "mase": self.mase,
            "horizon": self.horizon,
            "per_window": [
                {"window_start": str(start), "predictions": list(map(float, pred)), "actuals": list(map(float, act))}
                for start, pred, act in self.per_window
            ],
        }


def mase_scale(actuals) -> float:
    """Mean absolute one-step change of the actuals (in-sample naive error)."""
    y = np.asarray(actuals, dtype=float)
    if len(y) < 2:
        raise MaseUndefined("MASE needs at least two actual values")
    scale = float(np.mean(np.abs(np.diff(y))))
    if scale == 0.0:
        raise MaseUndefined("actuals are constant; the MASE denominator is zero")
    return scale


def evaluate(actuals, predictions, require_mase: bool = True, horizon: int = 0) -> ForecastEvaluation:
    """MAE, RMSE and MASE of ``predictions`` against ``actuals``.

    MASE divides the MAE by the mean absolute first difference of the
    actuals themselves. With ``require_mase=False`` an undefined MASE is
    reported as None instead of raising :class:`MaseUndefined`.
    """
    y = np.asarray(actuals, dtype=float)
    yhat = np.asarray(predictions, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise LengthMismatch(f"actuals {y.shape} and predictions {yhat.shape} differ")
    if len(y) == 0:
        raise LengthMismatch("nothing to evaluate")
    err = y - yhat
    mae = float(np.mean(np.abs(err)))
    # sqrt(mean e^2) >= mean |e| exactly; max() only absorbs last-bit rounding
    rmse = max(float(np.sqrt(np.mean(err * err))), mae)
    try:
        mase = mae / mase_scale(y)
    except MaseUndefined:
        if require_mase:
            raise
        mase = None
    return ForecastEvaluation(mae, rmse, mase, horizon)
