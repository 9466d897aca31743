"""Sliding-window backtest of the base rate, HMM, ARIMA and ARIMAX forecasters.

The first ``train_fraction`` of the series trains the first window; each
window forecasts ``horizon`` days, then the training window moves right by
``horizon``. Forecasts for a window only ever see target values before the
window starts.
"""
from __future__ import annotations

import datetime as dt
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import SeriesTooShort
from .arima import ExogenousSeries, arima_forecast, arima_fit, arimax_fit, arimax_forecast, grid_search
from .baseline import rolling_average_forecast
from .hmm import hmm_fit, hmm_forecast
from .metrics import evaluate
from .series import SeriesLike, TimeSeries, as_array

logger = logging.getLogger(__name__)

MODEL_ORDER = ("baserate", "hmm", "arima", "arimax")


@dataclass
class HmmSpec:
    n_states: int = 2
    family: str = "poisson"
    restarts: int = 3
    max_iters: int = 500
    tolerance: float = 1e-6


@dataclass
class ArimaSpec:
    """Either a fixed ``order`` or grid bounds searched by AIC in every window."""

    order: Optional[tuple] = None
    max_p: int = 7
    max_d: int = 2
    max_q: int = 7
    n_jobs: int = 1


@dataclass
class BacktestConfig:
    train_fraction: float = 0.6
    horizon: int = 7
    window: str = "sliding"
    baserate_window: int = 7
    models: tuple = MODEL_ORDER
    hmm: HmmSpec = field(default_factory=HmmSpec)
    arima: ArimaSpec = field(default_factory=ArimaSpec)
    arimax: ArimaSpec = field(default_factory=ArimaSpec)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.window not in ("sliding", "expanding"):
            raise ValueError("window must be 'sliding' or 'expanding'")
        unknown = set(self.models) - set(MODEL_ORDER)
        if unknown:
            raise ValueError(f"unknown models {sorted(unknown)}")


def window_plan(T: int, train_fraction: float, horizon: int) -> tuple[int, list]:
    """Training length and the (start, length) of every test window."""
    n_train = int(math.floor(train_fraction * T + 1e-9))
    if n_train < 2 or T - n_train < horizon:
        raise SeriesTooShort(
            f"series of {T} days leaves no full {horizon}-day test window after {n_train} training days"
        )
    windows = []
    s = n_train
    while s < T:
        windows.append((s, min(horizon, T - s)))
        s += horizon
    return n_train, windows


def _fit_arima(y, spec: ArimaSpec, X=None):
    if spec.order is not None:
        return arimax_fit(y, X, spec.order) if X is not None else arima_fit(y, spec.order)
    return grid_search(y, X, spec.max_p, spec.max_d, spec.max_q, n_jobs=spec.n_jobs).best


def _exog_rows(X_all: np.ndarray, lo: int, s: int, h: int):
    """Training rows with complete regressors, and h future rows (persistence-filled)."""
    train = X_all[lo:s]
    bad = np.flatnonzero(np.isnan(train).any(axis=1))
    first = int(bad[-1]) + 1 if len(bad) else 0
    future = X_all[s : s + h].copy()
    filled = 0
    last = train[-1] if len(train) else np.full(X_all.shape[1], np.nan)
    for i in range(len(future)):
        row_missing = np.isnan(future[i])
        if row_missing.any():
            future[i, row_missing] = last[row_missing]
            filled += 1
        last = future[i]
    return lo + first, future, filled


def forecast_window(
    history: np.ndarray,
    h: int,
    config: BacktestConfig,
    n_train: int,
    X_all: Optional[np.ndarray] = None,
) -> tuple[dict, dict]:
    """Forecast ``h`` days after ``history`` with every configured model.

    ``history`` holds only target values before the window; ``X_all`` is the
    aligned regressor matrix for the full timeline (regressors are treated as
    observable ahead of the target).
    """
    s = len(history)
    lo = 0 if config.window == "expanding" else max(0, s - n_train)
    train = history[lo:s]
    out, meta = {}, {}
    if "baserate" in config.models:
        out["baserate"] = rolling_average_forecast(train, min(config.baserate_window, len(train)), h)
    if "hmm" in config.models:
        spec = config.hmm
        model = hmm_fit(train, spec.n_states, spec.family, spec.max_iters, spec.tolerance, spec.restarts, config.seed)
        out["hmm"] = hmm_forecast(model, train, h)
    if "arima" in config.models:
        model = _fit_arima(train, config.arima)
        out["arima"] = arima_forecast(model, train, h)
        meta["arima_order"] = list(model.order)
    if "arimax" in config.models and X_all is not None:
        start, future, filled = _exog_rows(X_all, lo, s, h)
        y_x = history[start:s]
        model = _fit_arima(y_x, config.arimax, X_all[start:s])
        out["arimax"] = arimax_forecast(model, y_x, future, h)
        meta["arimax_order"] = list(model.order)
        meta["exog_persistence_days"] = filled
    return out, meta


@dataclass
class BacktestReport:
    start_date: Optional[dt.date]
    n_train: int
    windows: list
    actuals: np.ndarray
    predictions: dict
    evaluations: dict
    window_meta: list
    hmm_family: str = "poisson"
    exog_lag: Optional[int] = None
    exog_persistence_days: int = 0

    def column_label(self, model: str) -> str:
        return {
            "baserate": "Baserate",
            "hmm": f"HMM_{self.hmm_family.title().replace('_', '')}",
            "arima": "ARIMA",
            "arimax": "ARIMAX",
        }[model]

    @property
    def models(self) -> list:
        return [m for m in MODEL_ORDER if m in self.predictions]

    def table(self) -> dict:
        """Rows MAE / RMSE / MASE, columns per model."""
        return {
            metric.upper(): {self.column_label(m): getattr(self.evaluations[m], metric) for m in self.models}
            for metric in ("mae", "rmse", "mase")
        }

    def test_dates(self) -> list:
        if self.start_date is None:
            return list(range(self.n_train, self.n_train + len(self.actuals)))
        return [self.start_date + dt.timedelta(days=self.n_train + i) for i in range(len(self.actuals))]

    def to_dict(self) -> dict:
        return {
            "table": self.table(),
            "train_days": self.n_train,
            "windows": [
                {"start": str(self.test_dates()[s - self.n_train]), "length": n, **meta}
                for (s, n), meta in zip(self.windows, self.window_meta)
            ],
            "evaluations": {m: self.evaluations[m].to_dict() for m in self.models},
            "exog_lag": self.exog_lag,
            "exog_persistence_days": self.exog_persistence_days,
        }

    def plot_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(["date", "actual"] + self.models) + "\n")
        for i, day in enumerate(self.test_dates()):
            row = [str(day), repr(float(self.actuals[i]))]
            row += [repr(float(self.predictions[m][i])) for m in self.models]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def text(self) -> str:
        cols = [self.column_label(m) for m in self.models]
        lines = ["Measure " + " ".join(f"{c:>14}" for c in cols)]
        for metric, row in self.table().items():
            cells = [("n/a" if row[c] is None else f"{row[c]:.2f}") for c in cols]
            lines.append(f"{metric:<7} " + " ".join(f"{c:>14}" for c in cells))
        return "\n".join(lines)


def backtest(
    series: SeriesLike,
    exog: Optional[ExogenousSeries] = None,
    config: Optional[BacktestConfig] = None,
) -> BacktestReport:
    """Run the rolling protocol and score the concatenated test-set forecasts per model.

    ``exog`` may be an :class:`ExogenousSeries` (aligned to the target's dates)
    or an already-aligned (T, K) array. Without it the ARIMAX column is absent.
    """
    config = config or BacktestConfig()
    y = as_array(series)
    T = len(y)
    n_train, windows = window_plan(T, config.train_fraction, config.horizon)

    X_all = None
    lag = None
    if exog is not None and "arimax" in config.models:
        if isinstance(exog, ExogenousSeries):
            if not isinstance(series, TimeSeries):
                raise SeriesTooShort("date alignment of regressors needs a dated target series")
            X_all = exog.matrix(series.start_date, T, allow_partial=True)
            lag = exog.lag
        else:
            X_all = np.asarray(exog, dtype=float).reshape(T, -1)

    preds = {m: [] for m in MODEL_ORDER if m in config.models and (m != "arimax" or X_all is not None)}
    metas = []
    persisted = 0
    for s, n in windows:
        out, meta = forecast_window(y[:s].copy(), n, config, n_train, X_all)
        persisted += meta.get("exog_persistence_days", 0)
        metas.append(meta)
        for m in preds:
            preds[m].append(np.asarray(out[m], dtype=float))

    actuals = y[n_train:]
    start_date = series.start_date if isinstance(series, TimeSeries) else None
    evaluations = {}
    predictions = {}
    for m, chunks in preds.items():
        stream = np.concatenate(chunks)
        predictions[m] = stream
        ev = evaluate(actuals, stream, require_mase=False, horizon=config.horizon)
        offset = 0
        for (s, n), chunk in zip(windows, chunks):
            label = start_date + dt.timedelta(days=s) if start_date else s
            ev.per_window.append((label, chunk, actuals[offset : offset + n]))
            offset += n
        evaluations[m] = ev
    if persisted:
        logger.warning("%d future regressor values were filled by persistence", persisted)
    return BacktestReport(
        start_date, n_train, windows, actuals, predictions, evaluations, metas,
        hmm_family=config.hmm.family, exog_lag=lag, exog_persistence_days=persisted,
    )
