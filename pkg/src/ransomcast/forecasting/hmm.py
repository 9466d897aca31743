"""Hidden Markov models over daily counts.

Four emission families are supported: Poisson, Gaussian, geometric on
{0, 1, 2, ...} and a zero-hurdle geometric (explicit mass ``pi0`` at zero, a
geometric law shifted onto the positives). Parameters are estimated by
Baum-Welch; forward-backward runs entirely in log space.
"""
from __future__ import annotations

import copy
import datetime as dt
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numba
import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from ..errors import (
    DegenerateSeries,
    InvalidStochasticVector,
    NumericalUnderflow,
    SeriesTooShort,
    UnfitModel,
)
from .series import SeriesLike, TimeSeries, as_array

logger = logging.getLogger(__name__)

_TINY = 1e-12
STOCHASTIC_TOL = 1e-9


# --- emission families ------------------------------------------------------


class Emission:
    """Per-state emission parameters; subclasses implement one family."""

    kind = ""
    discrete = True
    param_names: tuple = ()

    def __init__(self, **params):
        for name in self.param_names:
            setattr(self, name, np.atleast_1d(np.asarray(params[name], dtype=float)).copy())
        self.validate()

    @property
    def n_states(self) -> int:
        return len(getattr(self, self.param_names[0]))

    def params(self) -> dict:
        return {name: getattr(self, name).tolist() for name in self.param_names}

    def with_params(self, **params) -> "Emission":
        new = copy.copy(self)
        for name in self.param_names:
            setattr(new, name, np.atleast_1d(np.asarray(params[name], dtype=float)).copy())
        new.validate()
        return new

    def copy(self):
        return self.with_params(**self.params())

    def permute(self, order):
        order = np.asarray(order)
        return self.with_params(**{k: np.asarray(v)[order] for k, v in self.params().items()})

    def validate(self):
        pass

    def log_prob(self, y: np.ndarray) -> np.ndarray:
        """(T, N) matrix of log emission probabilities."""
        raise NotImplementedError

    def mean(self) -> np.ndarray:
        raise NotImplementedError

    def m_step(self, y: np.ndarray, gamma: np.ndarray) -> "Emission":
        raise NotImplementedError

    def sample(self, state: int, rng: np.random.Generator) -> float:
        raise NotImplementedError

    @classmethod
    def from_groups(cls, groups: Sequence[np.ndarray]) -> "Emission":
        """Closed-form per-state fits on hard-assigned groups (initialization)."""
        weights = [np.ones(len(g)) for g in groups]
        y = np.concatenate(groups)
        gamma = np.zeros((len(y), len(groups)))
        start = 0
        for j, w in enumerate(weights):
            gamma[start : start + len(w), j] = w
            start += len(w)
        return cls.blank(len(groups)).m_step(y, gamma)

    @classmethod
    def blank(cls, n: int) -> "Emission":
        raise NotImplementedError


class Poisson(Emission):
    kind = "poisson"
    param_names = ("rate",)

    def validate(self):
        if np.any(self.rate <= 0):
            raise ValueError("Poisson rates must be positive")

    @classmethod
    def blank(cls, n):
        return cls(rate=np.ones(n))

    def log_prob(self, y):
        y = y[:, None]
        return xlogy(y, self.rate) - self.rate - gammaln(y + 1)

    def mean(self):
        return self.rate.copy()

    def m_step(self, y, gamma):
        w = gamma.sum(axis=0)
        rate = np.where(w > 0, gamma.T @ y / np.maximum(w, _TINY), self.rate)
        return Poisson(rate=np.maximum(rate, _TINY))

    def sample(self, state, rng):
        return float(rng.poisson(self.rate[state]))


class Gaussian(Emission):
    kind = "gaussian"
    discrete = False
    param_names = ("mu", "sigma")

    def __init__(self, var_floor: float = 1e-6, **params):
        self.var_floor = var_floor
        super().__init__(**params)

    def validate(self):
        if np.any(self.sigma <= 0):
            raise ValueError("Gaussian sigma must be positive")

    @classmethod
    def blank(cls, n):
        return cls(mu=np.zeros(n), sigma=np.ones(n))

    def log_prob(self, y):
        z = (y[:, None] - self.mu) / self.sigma
        return -0.5 * z * z - np.log(self.sigma) - 0.5 * math.log(2 * math.pi)

    def mean(self):
        return self.mu.copy()

    def m_step(self, y, gamma):
        w = gamma.sum(axis=0)
        safe = np.maximum(w, _TINY)
        mu = np.where(w > 0, gamma.T @ y / safe, self.mu)
        var = np.where(w > 0, (gamma * (y[:, None] - mu) ** 2).sum(axis=0) / safe, self.sigma**2)
        # the floored variance is still the constrained maximizer, so EM stays monotone
        var = np.maximum(var, self.var_floor)
        return Gaussian(var_floor=self.var_floor, mu=mu, sigma=np.sqrt(var))

    def sample(self, state, rng):
        return float(rng.normal(self.mu[state], self.sigma[state]))


class Geometric(Emission):
    """P(k) = p (1 - p)^k for k = 0, 1, 2, ..."""

    kind = "geometric"
    param_names = ("p",)

    def validate(self):
        if np.any(self.p <= 0) or np.any(self.p > 1):
            raise ValueError("geometric p must lie in (0, 1]")

    @classmethod
    def blank(cls, n):
        return cls(p=np.full(n, 0.5))

    def log_prob(self, y):
        return np.log(self.p) + xlog1py(y[:, None], -self.p)

    def mean(self):
        return (1.0 - self.p) / self.p

    def m_step(self, y, gamma):
        w = gamma.sum(axis=0)
        total = gamma.T @ y
        p = np.where(w > 0, w / np.maximum(w + total, _TINY), self.p)
        return Geometric(p=np.clip(p, _TINY, 1.0))

    def sample(self, state, rng):
        # numpy's geometric counts trials (support 1, 2, ...)
        return float(rng.geometric(self.p[state]) - 1)


class HurdleGeometric(Emission):
    """P(0) = pi0; P(k) = (1 - pi0) p (1 - p)^(k - 1) for k >= 1."""

    kind = "hurdle_geometric"
    param_names = ("pi0", "p")

    def validate(self):
        if np.any(self.pi0 < 0) or np.any(self.pi0 > 1):
            raise ValueError("pi0 must lie in [0, 1]")
        if np.any(self.p <= 0) or np.any(self.p > 1):
            raise ValueError("hurdle p must lie in (0, 1]")

    @classmethod
    def blank(cls, n):
        return cls(pi0=np.full(n, 0.5), p=np.full(n, 0.5))

    def log_prob(self, y):
        y = y[:, None]
        zero = y == 0
        with np.errstate(divide="ignore"):
            log_pi0 = np.log(self.pi0)
            log_rest = np.log1p(-self.pi0)
        pos = log_rest + np.log(self.p) + xlog1py(np.maximum(y - 1, 0), -self.p)
        return np.where(zero, log_pi0, pos)

    def mean(self):
        return (1.0 - self.pi0) / self.p

    def m_step(self, y, gamma):
        w = gamma.sum(axis=0)
        pos = y > 0
        w_pos = gamma[pos].sum(axis=0)
        w_zero = w - w_pos
        pi0 = np.where(w > 0, w_zero / np.maximum(w, _TINY), self.pi0)
        total_pos = gamma[pos].T @ y[pos]
        p = np.where(w_pos > 0, w_pos / np.maximum(total_pos, _TINY), self.p)
        return HurdleGeometric(pi0=np.clip(pi0, 0.0, 1.0), p=np.clip(p, _TINY, 1.0))

    def sample(self, state, rng):
        if rng.random() < self.pi0[state]:
            return 0.0
        return float(rng.geometric(self.p[state]))


FAMILIES = {cls.kind: cls for cls in (Poisson, Gaussian, Geometric, HurdleGeometric)}
_ALIASES = {"hurdlegeometric": "hurdle_geometric", "hurdle": "hurdle_geometric", "normal": "gaussian"}


def family_class(kind: str):
    key = kind.strip().lower().replace("-", "_")
    key = _ALIASES.get(key.replace("_", ""), key)
    if key not in FAMILIES:
        raise ValueError(f"unknown emission family {kind!r}; choose from {sorted(FAMILIES)}")
    return FAMILIES[key]


def make_emission(kind: str, **params) -> Emission:
    return family_class(kind)(**params)


# --- model ------------------------------------------------------------------


def check_stochastic(vec, what: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
        raise InvalidStochasticVector(f"{what} has entries outside [0, 1]")
    sums = arr.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > STOCHASTIC_TOL):
        raise InvalidStochasticVector(f"{what} does not sum to 1 (got {sums})")
    return arr


@dataclass
class HmmModel:
    initial: np.ndarray
    transition: np.ndarray
    emissions: Emission
    log_likelihood: float = float("nan")
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    path: Optional[np.ndarray] = None

    def __post_init__(self):
        self.initial = check_stochastic(self.initial, "initial distribution")
        self.transition = check_stochastic(self.transition, "transition matrix")
        n = len(self.initial)
        if self.transition.shape != (n, n) or self.emissions.n_states != n:
            raise ValueError("initial, transition and emission shapes disagree")

    @property
    def n_states(self) -> int:
        return len(self.initial)

    @property
    def family(self) -> str:
        return self.emissions.kind

    def permute(self, order) -> "HmmModel":
        order = np.asarray(order)
        return replace(
            self,
            initial=self.initial[order],
            transition=self.transition[np.ix_(order, order)],
            emissions=self.emissions.permute(order),
            path=None,
        )

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "family": self.family,
            "initial": self.initial.tolist(),
            "transition": self.transition.tolist(),
            "emission_params": self.emissions.params(),
            "state_means": self.emissions.mean().tolist(),
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
        }


# --- generator --------------------------------------------------------------


@dataclass
class GeneratedSeries:
    series: TimeSeries
    states: np.ndarray
    transition: np.ndarray
    clipped: int = 0


def hmm_generate(
    n_states: int,
    emission: Emission,
    T: int,
    seed: int,
    pi=None,
    eta=None,
    dirichlet_alpha=None,
    start_date: dt.date = dt.date(2017, 1, 1),
) -> GeneratedSeries:
    """Sample a count series from an HMM.

    The initial state is drawn from ``pi`` (uniform if omitted). Transitions use
    ``eta`` or, if ``dirichlet_alpha`` is given instead, rows drawn from a
    Dirichlet. Gaussian draws are truncated at zero and the number of
    truncations is reported.
    """
    if T < 1:
        raise SeriesTooShort("T must be >= 1")
    if emission.n_states != n_states:
        raise ValueError("emission parameters do not match n_states")
    rng = np.random.default_rng(seed)
    pi = check_stochastic(np.full(n_states, 1.0 / n_states) if pi is None else pi, "pi")
    if eta is None:
        if dirichlet_alpha is None:
            raise InvalidStochasticVector("need eta or dirichlet_alpha")
        alpha = np.broadcast_to(np.asarray(dirichlet_alpha, dtype=float), (n_states, n_states))
        if np.any(alpha <= 0):
            raise InvalidStochasticVector("Dirichlet concentration must be positive")
        eta = np.vstack([rng.dirichlet(row) for row in alpha])
    eta = check_stochastic(eta, "eta")
    if pi.shape != (n_states,) or eta.shape != (n_states, n_states):
        raise InvalidStochasticVector("pi/eta shapes do not match n_states")

    states = np.empty(T, dtype=int)
    values = np.empty(T)
    clipped = 0
    z = rng.choice(n_states, p=pi)
    for t in range(T):
        if t > 0:
            z = rng.choice(n_states, p=eta[z])
        states[t] = z
        y = emission.sample(z, rng)
        if y < 0:
            clipped += 1
            y = 0.0
        values[t] = y
    series = TimeSeries(start_date, values, name=f"hmm_{emission.kind}")
    return GeneratedSeries(series, states, eta, clipped)


# --- inference kernels --------------------------------------------------------


@numba.njit(cache=True)
def _lse(a):
    m = -np.inf
    for v in a:
        if v > m:
            m = v
    if m == -np.inf:
        return m
    s = 0.0
    for v in a:
        s += math.exp(v - m)
    return m + math.log(s)


@numba.njit(cache=True)
def _forward(log_pi, log_eta, log_b):
    T, N = log_b.shape
    la = np.empty((T, N))
    tmp = np.empty(N)
    for j in range(N):
        la[0, j] = log_pi[j] + log_b[0, j]
    for t in range(1, T):
        for j in range(N):
            for i in range(N):
                tmp[i] = la[t - 1, i] + log_eta[i, j]
            la[t, j] = _lse(tmp) + log_b[t, j]
    return la


@numba.njit(cache=True)
def _backward(log_eta, log_b):
    T, N = log_b.shape
    lb = np.zeros((T, N))
    tmp = np.empty(N)
    for t in range(T - 2, -1, -1):
        for i in range(N):
            for j in range(N):
                tmp[j] = log_eta[i, j] + log_b[t + 1, j] + lb[t + 1, j]
            lb[t, i] = _lse(tmp)
    return lb


@numba.njit(cache=True)
def _xi_sum(la, lb, log_eta, log_b, loglik):
    T, N = log_b.shape
    out = np.zeros((N, N))
    for t in range(T - 1):
        for i in range(N):
            for j in range(N):
                v = la[t, i] + log_eta[i, j] + log_b[t + 1, j] + lb[t + 1, j] - loglik
                if v > -745.0:
                    out[i, j] += math.exp(v)
    return out


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def _emission_logs(emissions: Emission, y: np.ndarray) -> np.ndarray:
    log_b = emissions.log_prob(y)
    # an observation impossible under every state carries no state information
    dead = np.all(~np.isfinite(log_b), axis=1)
    if np.any(dead):
        log_b[dead] = 0.0
    return np.ascontiguousarray(log_b)


def forward_backward(model: HmmModel, y: np.ndarray):
    """Return (log-likelihood, state posteriors, expected transition counts)."""
    log_b = _emission_logs(model.emissions, y)
    log_pi, log_eta = _log(model.initial), _log(model.transition)
    la = _forward(log_pi, log_eta, log_b)
    loglik = _lse(la[-1])
    if not np.isfinite(loglik):
        raise NumericalUnderflow("log-likelihood is not finite")
    lb = _backward(log_eta, log_b)
    lg = la + lb
    lg -= lg.max(axis=1, keepdims=True)
    gamma = np.exp(lg)
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi = _xi_sum(la, lb, log_eta, log_b, loglik)
    return float(loglik), gamma, xi


def log_likelihood(model: HmmModel, series: SeriesLike) -> float:
    y = as_array(series)
    la = _forward(_log(model.initial), _log(model.transition), _emission_logs(model.emissions, y))
    return float(_lse(la[-1]))


def filtered_distribution(model: HmmModel, series: SeriesLike) -> np.ndarray:
    """P(z_T | y_1..y_T), the filtered state distribution at the last observation."""
    y = as_array(series)
    la = _forward(_log(model.initial), _log(model.transition), _emission_logs(model.emissions, y))
    last = la[-1] - la[-1].max()
    dist = np.exp(last)
    return dist / dist.sum()


def _em_step(model: HmmModel, y: np.ndarray):
    loglik, gamma, xi = forward_backward(model, y)
    initial = gamma[0] / gamma[0].sum()
    rows = xi.sum(axis=1, keepdims=True)
    transition = np.where(rows > 0, xi / np.where(rows > 0, rows, 1.0), model.transition)
    transition /= transition.sum(axis=1, keepdims=True)
    emissions = model.emissions.m_step(y, gamma)
    return loglik, HmmModel(initial, transition, emissions)


def baum_welch(model: HmmModel, series: SeriesLike, max_iters: int = 500, tolerance: float = 1e-6) -> HmmModel:
    """Run EM from ``model`` until the log-likelihood gain drops below ``tolerance``.

    ``trace`` holds the log-likelihood of each successive parameter set; the
    returned parameters are those whose likelihood is ``trace[-1]``.
    """
    y = as_array(series)
    current = model
    trace = []
    converged = False
    for _ in range(max_iters):
        loglik, proposal = _em_step(current, y)
        if trace and loglik - trace[-1] < -1e-8 * max(1.0, abs(loglik)):
            logger.warning("EM log-likelihood decreased by %g", trace[-1] - loglik)
        trace.append(loglik)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tolerance:
            converged = True
            break
        current = proposal
    if not converged:
        trace.append(log_likelihood(current, y))
    return replace(current, log_likelihood=trace[-1], trace=trace, iterations=len(trace), converged=converged)


def _initial_model(y: np.ndarray, n_states: int, family, rng, jitter: float) -> HmmModel:
    order = np.argsort(y, kind="stable")
    groups = [y[chunk] for chunk in np.array_split(order, n_states)]
    emissions = family.from_groups(groups)
    params = emissions.params()
    if jitter > 0:
        for name, vals in params.items():
            vals = np.asarray(vals) * (1.0 + jitter * rng.uniform(-1, 1, size=len(vals)))
            params[name] = vals
        if "p" in params:
            params["p"] = np.clip(params["p"], _TINY, 1.0)
        if "pi0" in params:
            params["pi0"] = np.clip(params["pi0"], 0.0, 1.0)
        if "rate" in params:
            params["rate"] = np.maximum(params["rate"], _TINY)
        if "sigma" in params:
            params["sigma"] = np.maximum(params["sigma"], math.sqrt(emissions.var_floor))
        emissions = emissions.blank(n_states).with_params(**params)
    stay = 0.8 if n_states > 1 else 1.0
    transition = np.full((n_states, n_states), (1 - stay) / max(n_states - 1, 1))
    np.fill_diagonal(transition, stay)
    if jitter > 0 and n_states > 1:
        transition = 0.7 * transition + 0.3 * rng.dirichlet(np.ones(n_states), size=n_states)
    initial = np.full(n_states, 1.0 / n_states)
    return HmmModel(initial, transition, emissions)


def hmm_fit(
    series: SeriesLike,
    n_states: int = 2,
    family: str = "poisson",
    max_iters: int = 500,
    tolerance: float = 1e-6,
    restarts: int = 3,
    seed: int = 0,
    init: Optional[HmmModel] = None,
) -> HmmModel:
    """Fit an HMM by Baum-Welch and return the best of ``restarts`` runs.

    Initial emission parameters come from a quantile split of the data;
    restart ``r > 0`` jitters them with an RNG seeded by ``(seed, r)``.
    Passing ``init`` runs EM once from that model instead.
    """
    y = as_array(series)
    fam = family_class(family)
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    if len(y) <= n_states:
        raise SeriesTooShort(f"need more than {n_states} observations, got {len(y)}")
    if fam.discrete and (np.any(y < 0) or np.any(y != np.round(y))):
        raise ValueError(f"{fam.kind} emissions need non-negative integer counts")

    if init is not None:
        return _with_path(baum_welch(init, y, max_iters, tolerance), y)

    if fam.discrete and n_states > 1 and np.ptp(y) == 0:
        warnings.warn(
            f"constant series cannot support {n_states} distinct {fam.kind} states",
            DegenerateSeries,
            stacklevel=2,
        )
        single = fam.from_groups([y])
        emissions = single.permute(np.zeros(n_states, dtype=int))
        uniform = np.full(n_states, 1.0 / n_states)
        model = HmmModel(uniform, np.tile(uniform, (n_states, 1)), emissions)
        return _with_path(baum_welch(model, y, 1, tolerance), y)

    best = None
    for r in range(max(1, restarts)):
        rng = np.random.default_rng([seed, r])
        start = _initial_model(y, n_states, fam, rng, jitter=0.0 if r == 0 else 0.25)
        fitted = baum_welch(start, y, max_iters, tolerance)
        if best is None or fitted.log_likelihood > best.log_likelihood:
            best = fitted
    return _with_path(best, y)


def viterbi(model: HmmModel, series: SeriesLike) -> np.ndarray:
    y = as_array(series)
    log_b = _emission_logs(model.emissions, y)
    log_eta = _log(model.transition)
    T, N = log_b.shape
    delta = _log(model.initial) + log_b[0]
    back = np.zeros((T, N), dtype=int)
    for t in range(1, T):
        scores = delta[:, None] + log_eta
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(N)] + log_b[t]
    path = np.empty(T, dtype=int)
    path[-1] = int(np.argmax(delta))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def _with_path(model: HmmModel, y: np.ndarray) -> HmmModel:
    model.path = viterbi(model, y)
    return model


def hmm_forecast(model: HmmModel, series: SeriesLike, horizon: int) -> np.ndarray:
    """Expected counts for the next ``horizon`` days.

    The filtered distribution at the last observation is pushed through the
    transition matrix h times and weighted by the per-state means.
    """
    if horizon < 1:
        raise UnfitModel("horizon must be >= 1")
    if model is None or not isinstance(model, HmmModel):
        raise UnfitModel("forecast needs a fitted HmmModel")
    dist = filtered_distribution(model, series)
    means = model.emissions.mean()
    out = np.empty(horizon)
    for h in range(horizon):
        dist = dist @ model.transition
        out[h] = dist @ means
    if model.emissions.discrete:
        out = np.maximum(out, 0.0)
    return out
