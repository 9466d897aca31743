"""ARIMA and ARIMAX by exact Gaussian maximum likelihood.

On the d-times differenced series ``w`` the model is::

    w_t = c + sum_i ar_i w_{t-i} + sum_j ma_j e_{t-j} + sum_k gamma_k x_{k,t} + e_t

The deterministic part ``m_t`` (constant plus filtered exogenous terms) is
separated from a zero-mean ARMA remainder whose likelihood is evaluated with
a Kalman filter. AR and MA coefficients are optimized through a
partial-autocorrelation reparametrization, so every fit is stationary and
invertible by construction.
"""
from __future__ import annotations

import datetime as dt
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np
from scipy import linalg, optimize, signal

from ..errors import (
    AllFitsFailed,
    ExogCoverage,
    NonStationaryFit,
    SeriesTooShort,
    UnfitModel,
)
from .series import SeriesLike, TimeSeries, as_array

logger = logging.getLogger(__name__)

_SIGMA2_FLOOR = 1e-10
_BOUND = 25.0


# --- differencing -------------------------------------------------------------


def difference(series: SeriesLike, d: int) -> np.ndarray:
    y = as_array(series)
    if d < 0:
        raise ValueError("d must be >= 0")
    if len(y) <= d:
        raise SeriesTooShort(f"cannot difference {len(y)} values {d} times")
    return np.diff(y, n=d) if d else y.copy()


def integrate(forecast: Sequence[float], anchors: Sequence[float], d: int) -> np.ndarray:
    """Undo ``d`` differences.

    ``anchors`` are the original-scale values immediately preceding the
    forecast (at least ``d`` of them).
    """
    x = np.asarray(forecast, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    if d == 0:
        return x.copy()
    if len(anchors) < d:
        raise SeriesTooShort(f"integration of order {d} needs {d} anchors")
    for k in reversed(range(d)):
        x = np.diff(anchors, n=k)[-1] + np.cumsum(x)
    return x


# --- parameter transforms -------------------------------------------------------


def constrain_stationary(u: np.ndarray) -> np.ndarray:
    """Map unconstrained reals to AR coefficients with all roots outside the unit circle."""
    r = u / np.sqrt(1.0 + u * u)
    phi = np.zeros(len(r))
    for k in range(len(r)):
        prev = phi[:k].copy()
        phi[k] = r[k]
        phi[:k] = prev - r[k] * prev[::-1]
    return phi


def unconstrain_stationary(phi: np.ndarray) -> np.ndarray:
    """Inverse of :func:`constrain_stationary` (step-down Levinson recursion)."""
    phi = np.asarray(phi, dtype=float).copy()
    p = len(phi)
    r = np.zeros(p)
    for k in range(p - 1, -1, -1):
        r[k] = phi[k]
        if abs(r[k]) >= 1:
            raise NonStationaryFit("coefficients are not stationary")
        prev = (phi[:k] + r[k] * phi[:k][::-1]) / (1 - r[k] ** 2)
        phi = prev
    return r / np.sqrt(1.0 - r * r)


def is_stationary(ar: Sequence[float], margin: float = 0.0) -> bool:
    """True if every root of 1 - ar_1 z - ... - ar_p z^p lies outside the circle |z| = 1 + margin."""
    ar = np.asarray(ar, dtype=float)
    if len(ar) == 0 or not np.any(ar):
        return True
    # the companion eigenvalues are the reciprocal roots; this stays stable for tiny trailing lags
    companion = np.zeros((len(ar), len(ar)))
    companion[0] = ar
    companion[1:, :-1] = np.eye(len(ar) - 1)
    return bool(np.all(np.abs(linalg.eigvals(companion)) * (1.0 + margin) < 1.0))


def is_invertible(ma: Sequence[float], margin: float = 0.0) -> bool:
    return is_stationary(-np.asarray(ma, dtype=float), margin)


# --- Kalman filter --------------------------------------------------------------


def _state_space(ar: np.ndarray, ma: np.ndarray):
    r = max(len(ar), len(ma) + 1, 1)
    T = np.zeros((r, r))
    T[: len(ar), 0] = ar
    T[np.arange(r - 1), np.arange(1, r)] = 1.0
    R = np.zeros(r)
    R[0] = 1.0
    R[1 : len(ma) + 1] = ma
    RR = np.outer(R, R)
    if r == 1 and T[0, 0] == 0.0:
        P0 = RR.copy()
    else:
        P0 = linalg.solve_discrete_lyapunov(T, RR)
    return T, RR, P0


@numba.njit(cache=True, nogil=True)
def _kalman(u, T, RR, P0):
    """Innovations and their variances (unit noise variance) plus the final predicted state."""
    n = u.shape[0]
    r = T.shape[0]
    a = np.zeros(r)
    P = P0.copy()
    v = np.empty(n)
    F = np.empty(n)
    TP = np.empty((r, r))
    K = np.empty(r)
    for t in range(n):
        f = P[0, 0]
        if f < 1e-12:
            f = 1e-12
        vt = u[t] - a[0]
        v[t] = vt
        F[t] = f
        for i in range(r):
            s = 0.0
            for k in range(r):
                s += T[i, k] * P[k, 0]
            K[i] = s / f
        anew = np.empty(r)
        for i in range(r):
            s = 0.0
            for k in range(r):
                s += T[i, k] * a[k]
            anew[i] = s + K[i] * vt
        a = anew
        for i in range(r):
            for j in range(r):
                s = 0.0
                for k in range(r):
                    s += T[i, k] * P[k, j]
                TP[i, j] = s
        for i in range(r):
            for j in range(r):
                s = 0.0
                for k in range(r):
                    s += TP[i, k] * T[j, k]
                P[i, j] = s + RR[i, j] - K[i] * K[j] * f
    return v, F, a


def _concentrated_loglik(v, F):
    n = len(v)
    sigma2 = max(float(np.sum(v * v / F)) / n, _SIGMA2_FLOOR)
    loglik = -0.5 * n * (math.log(2 * math.pi) + math.log(sigma2)) - 0.5 * float(
        np.sum(v * v / F)
    ) / sigma2 - 0.5 * float(np.sum(np.log(F)))
    return loglik, sigma2


# --- model ------------------------------------------------------------------------


@dataclass
class ArimaModel:
    """Fitted (or hand-specified) ARIMA/ARIMAX parameters.

    ``constant`` is ``c`` on the differenced scale. ``exog_mean`` is the
    training mean of each regressor; the exogenous filter treats pre-sample
    regressor values as equal to it.
    """

    order: tuple
    constant: float = 0.0
    ar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma2: float = 1.0
    exog_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    exog_mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    loglik: float = float("nan")
    aic: float = float("nan")
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_obs: int = 0
    exog_train: Optional[np.ndarray] = None

    def __post_init__(self):
        self.order = tuple(int(o) for o in self.order)
        p, d, q = self.order
        self.ar = np.asarray(self.ar, dtype=float).reshape(-1)
        self.ma = np.asarray(self.ma, dtype=float).reshape(-1)
        self.exog_coeffs = np.asarray(self.exog_coeffs, dtype=float).reshape(-1)
        if len(self.exog_mean) != len(self.exog_coeffs):
            self.exog_mean = np.zeros(len(self.exog_coeffs))
        self.exog_mean = np.asarray(self.exog_mean, dtype=float).reshape(-1)
        if len(self.ar) != p or len(self.ma) != q:
            raise ValueError(f"coefficient counts do not match order {self.order}")
        if self.sigma2 <= 0:
            raise ValueError("noise variance must be positive")

    @property
    def k_exog(self) -> int:
        return len(self.exog_coeffs)

    @property
    def mean(self) -> float:
        """Level of the differenced series when every regressor sits at its mean."""
        return (self.constant + float(self.exog_coeffs @ self.exog_mean)) / (1.0 - float(np.sum(self.ar)))

    @property
    def n_params(self) -> int:
        p, _, q = self.order
        return p + q + 1 + 1 + self.k_exog

    def to_dict(self) -> dict:
        return {
            "order": list(self.order),
            "constant": self.constant,
            "ar": self.ar.tolist(),
            "ma": self.ma.tolist(),
            "exog_coeffs": self.exog_coeffs.tolist(),
            "sigma2": self.sigma2,
            "loglik": self.loglik,
            "aic": self.aic,
            "n_obs": self.n_obs,
        }


ArimaxModel = ArimaModel


def _as_exog_matrix(exog, n: int) -> Optional[np.ndarray]:
    if exog is None:
        return None
    X = np.asarray(exog, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] == 0:
        return None
    if X.shape[0] != n:
        raise ExogCoverage(f"exogenous matrix has {X.shape[0]} rows, series has {n}")
    if not np.all(np.isfinite(X)):
        raise ExogCoverage("exogenous values missing or non-finite")
    return X


def _deterministic(w_len, mu, ar, gamma, Xc):
    """m_t = mu + (1 - ar(L))^{-1} gamma . (x_t - xbar)."""
    m = np.full(w_len, mu)
    if Xc is not None:
        drive = Xc @ gamma
        m = m + (signal.lfilter([1.0], np.r_[1.0, -ar], drive) if len(ar) else drive)
    return m


def _unpack(theta, p, q, k):
    mu = theta[0]
    gamma = theta[1 : 1 + k]
    ar = constrain_stationary(theta[1 + k : 1 + k + p])
    ma = -constrain_stationary(theta[1 + k + p : 1 + k + p + q])
    return mu, gamma, ar, ma


def _filter(w, mu, ar, ma, gamma, Xc):
    u = w - _deterministic(len(w), mu, ar, gamma, Xc)
    T, RR, P0 = _state_space(ar, ma)
    v, F, a = _kalman(np.ascontiguousarray(u), T, RR, P0)
    return v, F, a, T


def _start_values(w, Xc, p, q):
    k = 0 if Xc is None else Xc.shape[1]
    mu = float(np.mean(w))
    gamma = np.zeros(k)
    resid = w - mu
    if k:
        design = np.column_stack([np.ones(len(w)), Xc])
        coef, *_ = np.linalg.lstsq(design, w, rcond=None)
        mu, gamma = float(coef[0]), coef[1:]
        resid = w - design @ coef
    ar_u = np.zeros(p)
    if p and len(w) > 2 * p + 1:
        # conditional least squares AR start, kept only if stationary
        lags = np.column_stack([resid[p - i - 1 : len(resid) - i - 1] for i in range(p)])
        phi, *_ = np.linalg.lstsq(lags, resid[p:], rcond=None)
        if is_stationary(phi, 1e-3):
            ar_u = np.clip(unconstrain_stationary(phi), -_BOUND + 1, _BOUND - 1)
    return np.r_[mu, gamma, ar_u, np.zeros(q)]


def _fit_core(y: np.ndarray, order, X: Optional[np.ndarray]) -> ArimaModel:
    p, d, q = (int(o) for o in order)
    if min(p, d, q) < 0:
        raise ValueError("orders must be non-negative")
    if len(y) <= p + d + q + 1:
        raise SeriesTooShort(f"ARIMA{(p, d, q)} needs more than {p + d + q + 1} observations")
    w = difference(y, d)
    Xw = X[d:] if X is not None else None
    k = 0 if Xw is None else Xw.shape[1]
    xbar = Xw.mean(axis=0) if k else np.zeros(0)
    Xc = Xw - xbar if k else None
    scale = float(np.std(w)) or 1.0

    def objective(theta):
        mu, gamma, ar, ma = _unpack(theta, p, q, k)
        try:
            v, F, _, _ = _filter(w, mu, ar, ma, gamma, Xc)
        except (np.linalg.LinAlgError, ValueError):
            return 1e10
        ll, _ = _concentrated_loglik(v, F)
        return -ll / len(w) if np.isfinite(ll) else 1e10

    start = _start_values(w, Xc, p, q)
    if p + q + k == 0:
        # only the mean is free: the exact MLE is the sample mean
        theta = start
    else:
        bounds = [(None, None)] * (1 + k) + [(-_BOUND, _BOUND)] * (p + q)
        # rescale the level and regression slots so all coordinates are O(1)
        scales = np.r_[scale, np.full(k, scale / np.maximum(Xc.std(axis=0), 1e-12)) if k else [], np.ones(p + q)]
        res = optimize.minimize(
            lambda z: objective(z * scales),
            start / scales,
            method="L-BFGS-B",
            bounds=[(None if lo is None else lo, None if hi is None else hi) for lo, hi in bounds],
            options={"maxiter": 1000, "ftol": 1e-12, "gtol": 1e-8},
        )
        theta = res.x * scales
    mu, gamma, ar, ma = _unpack(theta, p, q, k)
    if not (is_stationary(ar) and is_invertible(ma)):
        raise NonStationaryFit(f"ARIMA{(p, d, q)} fit left the stationary region")
    v, F, _, _ = _filter(w, mu, ar, ma, gamma, Xc)
    loglik, sigma2 = _concentrated_loglik(v, F)
    model = ArimaModel(
        order=(p, d, q),
        constant=float(mu * (1.0 - np.sum(ar)) - gamma @ xbar) if k else float(mu * (1.0 - np.sum(ar))),
        ar=ar,
        ma=ma,
        sigma2=sigma2,
        exog_coeffs=gamma,
        exog_mean=xbar,
        loglik=loglik,
        residuals=v,
        n_obs=len(w),
        exog_train=X,
    )
    model.aic = 2 * model.n_params - 2 * loglik
    return model


def arima_fit(series: SeriesLike, order) -> ArimaModel:
    """Maximum-likelihood ARIMA(p, d, q) with a constant on the differenced scale."""
    return _fit_core(as_array(series), order, None)


def _forecast_core(model: ArimaModel, y: np.ndarray, X_hist, X_future, horizon: int) -> np.ndarray:
    if horizon < 1:
        raise UnfitModel("horizon must be >= 1")
    p, d, q = model.order
    w = difference(y, d)
    k = model.k_exog
    if k:
        X_hist = _as_exog_matrix(X_hist, len(y))
        if X_future is None or len(np.asarray(X_future)) < horizon:
            raise ExogCoverage(f"need {horizon} future exogenous rows")
        X_future = _as_exog_matrix(np.asarray(X_future, dtype=float)[:horizon], horizon)
        Xc_all = np.vstack([X_hist[d:], X_future]) - model.exog_mean
    else:
        Xc_all = None
    mu = model.mean
    m_all = _deterministic(len(w) + horizon, mu, model.ar, model.exog_coeffs, Xc_all)
    u = w - m_all[: len(w)]
    T, RR, P0 = _state_space(model.ar, model.ma)
    _, _, a = _kalman(np.ascontiguousarray(u), T, RR, P0)
    u_future = np.empty(horizon)
    for h in range(horizon):
        u_future[h] = a[0]
        a = T @ a
    w_future = m_all[len(w) :] + u_future
    return integrate(w_future, y[-max(d, 1) :], d)


def arima_forecast(model: ArimaModel, series: SeriesLike, horizon: int) -> np.ndarray:
    """Multi-step forecasts; future shocks are set to zero and fed back recursively."""
    if not isinstance(model, ArimaModel):
        raise UnfitModel("forecast needs a fitted ArimaModel")
    if model.k_exog:
        raise ExogCoverage("model has exogenous terms; use arimax_forecast")
    return _forecast_core(model, as_array(series), None, None, horizon)


# --- exogenous ----------------------------------------------------------------------


@dataclass
class ExogenousSeries:
    """Regressor series that lead the target by ``lag`` days.

    After alignment the regressor value used at day t is the raw value
    observed on day ``t - lag``.
    """

    series: list
    lag: int = 0

    def __post_init__(self):
        if isinstance(self.series, TimeSeries):
            self.series = [self.series]
        if self.lag < 0:
            raise ValueError("lag must be >= 0")

    @property
    def k(self) -> int:
        return len(self.series)

    def matrix(self, start, n: int, allow_partial: bool = False) -> np.ndarray:
        """Aligned (n, K) matrix for ``n`` days from ``start``; gaps are NaN if allowed."""
        X = np.full((n, self.k), np.nan)
        for j, s in enumerate(self.series):
            first = (start - dt.timedelta(days=self.lag) - s.start_date).days
            for i in range(n):
                src = first + i
                if 0 <= src < len(s):
                    X[i, j] = s.values[src]
        if not allow_partial and np.isnan(X).any():
            raise ExogCoverage(f"exogenous series do not cover {n} days from {start} at lag {self.lag}")
        return X


def _exog_for(series, exog) -> Optional[np.ndarray]:
    if exog is None:
        return None
    if isinstance(exog, TimeSeries):
        exog = ExogenousSeries([exog])
    if isinstance(exog, ExogenousSeries):
        if not isinstance(series, TimeSeries):
            raise ExogCoverage("date alignment needs a dated target TimeSeries")
        return exog.matrix(series.start_date, len(series)) if exog.k else None
    return _as_exog_matrix(exog, len(as_array(series)))


def arimax_fit(series: SeriesLike, exog, order) -> ArimaModel:
    """ARIMA with exogenous regressors entering the differenced equation additively.

    ``exog`` is an :class:`ExogenousSeries` (aligned by date) or an array of
    shape (T, K) already aligned with ``series``. With K = 0 this is exactly
    :func:`arima_fit`.
    """
    y = as_array(series)
    return _fit_core(y, order, _exog_for(series, exog))


def arimax_forecast(
    model: ArimaModel, series: SeriesLike, exog_future, horizon: int, exog_history=None
) -> np.ndarray:
    """Forecast ``horizon`` steps given future regressor rows ``exog_future`` (h, K).

    ``exog_history`` defaults to the regressors the model was fitted on,
    which requires ``series`` to be the fitted series.
    """
    if not isinstance(model, ArimaModel):
        raise UnfitModel("forecast needs a fitted ArimaModel")
    y = as_array(series)
    if not model.k_exog:
        return _forecast_core(model, y, None, None, horizon)
    if exog_history is None:
        exog_history = model.exog_train
    return _forecast_core(model, y, exog_history, exog_future, horizon)


# --- order selection -------------------------------------------------------------------


def _try_fit(args):
    y, order, X = args
    try:
        return order, _fit_core(y, order, X), None
    except (SeriesTooShort, NonStationaryFit, ExogCoverage, np.linalg.LinAlgError, ValueError) as exc:
        return order, None, f"{type(exc).__name__}: {exc}"


@dataclass
class GridResult:
    best: ArimaModel
    aics: dict
    failures: dict


def grid_search(
    series: SeriesLike,
    exog=None,
    max_p: int = 7,
    max_d: int = 2,
    max_q: int = 7,
    n_jobs: int = 1,
) -> GridResult:
    """Fit every order in [0..max_p] x [0..max_d] x [0..max_q] and keep the minimum AIC.

    Ties go to the smaller p + q, then the smaller d. Failed fits are logged
    and skipped. Cells are independent and keyed by order, so ``n_jobs > 1``
    returns the same result as a serial scan.
    """
    if min(max_p, max_d, max_q) < 0:
        raise ValueError("grid bounds must be >= 0")
    y = as_array(series)
    X = _exog_for(series, exog)
    orders = [(p, d, q) for p in range(max_p + 1) for d in range(max_d + 1) for q in range(max_q + 1)]
    jobs = [(y, o, X) for o in orders]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            results = list(pool.map(_try_fit, jobs, chunksize=4))
    else:
        results = [_try_fit(j) for j in jobs]
    fitted = {o: m for o, m, _ in results if m is not None and np.isfinite(m.aic)}
    failures = {o: err for o, _, err in results if err is not None}
    for o, err in sorted(failures.items()):
        logger.debug("ARIMA%s skipped: %s", o, err)
    if not fitted:
        raise AllFitsFailed(f"no order in the grid could be fitted ({len(failures)} failures)")
    best_order = min(fitted, key=lambda o: (fitted[o].aic, o[0] + o[2], o[1]))
    return GridResult(fitted[best_order], {o: m.aic for o, m in fitted.items()}, failures)
