"""Two-stage domain classifier: L2 logistic regression trained by gradient descent.

Step 1 scores every newly registered domain on its name alone; survivors get
a WHOIS lookup and a Step 2 score over the full feature vector.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .domain_feed import ZoneDiff
from .errors import InsufficientData, NonFiniteFeature, SchemaMismatch, SingleClass
from .features import FeatureVector, encode_domain

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
MALICIOUS, BENIGN = 1, 0


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    schema: tuple
    domains: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.y), len(self.schema))
        self.y = np.asarray(self.y, dtype=int)
        if not set(np.unique(self.y)) <= {0, 1}:
            raise ValueError("labels must be 0 (benign) or 1 (malicious)")

    @classmethod
    def from_vectors(cls, rows: Sequence[tuple]) -> "LabeledDataset":
        """Build from ``(FeatureVector, label)`` pairs sharing one schema."""
        if not rows:
            raise InsufficientData("no rows")
        schema = rows[0][0].schema
        for vec, _ in rows:
            if vec.schema != schema:
                raise SchemaMismatch("rows do not share a schema")
        X = np.vstack([vec.values for vec, _ in rows])
        y = np.array([int(label) for _, label in rows])
        return cls(X, y, schema, [vec.domain for vec, _ in rows])

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        domains = [self.domains[i] for i in idx] if self.domains else []
        return LabeledDataset(self.X[idx], self.y[idx], self.schema, domains)


@dataclass
class TrainConfig:
    l2: float = 1e-2
    max_iters: int = 5000
    tolerance: float = 1e-10
    seed: int = 0
    threshold: float = 0.5


@dataclass
class LinearClassifier:
    weights: np.ndarray
    bias: float
    schema: tuple
    threshold: float
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if not (np.all(np.isfinite(self.weights)) and math.isfinite(self.bias)):
            raise ValueError("weights must be finite")

    def standardize(self, X: np.ndarray) -> np.ndarray:
        Z = (np.atleast_2d(X) - self.mean) / self.std
        Z[:, self.constant] = 0.0
        return Z

    def to_document(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "schema": list(self.schema),
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "threshold": self.threshold,
            "standardization": {
                "mean": self.mean.tolist(),
                "std": self.std.tolist(),
                "constant": self.constant.tolist(),
            },
            "training_meta": self.training_meta,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "LinearClassifier":
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {doc.get('format_version')!r}")
        st = doc["standardization"]
        return cls(
            weights=np.array(doc["weights"], dtype=float),
            bias=float(doc["bias"]),
            schema=tuple(doc["schema"]),
            threshold=float(doc["threshold"]),
            mean=np.array(st["mean"], dtype=float),
            std=np.array(st["std"], dtype=float),
            constant=np.array(st["constant"], dtype=bool),
            training_meta=dict(doc.get("training_meta", {})),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_document(), sort_keys=True, indent=2)

    @classmethod
    def loads(cls, text: str) -> "LinearClassifier":
        return cls.from_document(json.loads(text))


def _loss_and_grad(Z1, y, theta, l2):
    """Mean logistic loss with an L2 penalty on the non-bias weights."""
    margin = Z1 @ theta
    # log(1 + exp(-s*m)) written stably
    signed = np.where(y == 1, margin, -margin)
    loss = np.mean(np.logaddexp(0.0, -signed)) + 0.5 * l2 * theta[:-1] @ theta[:-1]
    resid = expit(margin) - y
    grad = Z1.T @ resid / len(y)
    grad[:-1] += l2 * theta[:-1]
    return loss, grad


def train(data: LabeledDataset, config: Optional[TrainConfig] = None) -> LinearClassifier:
    """Fit an L2-regularized logistic regression by full-batch gradient descent.

    Features are standardized with training statistics; constant columns are
    flagged and their weights pinned at zero. The step size is 1/L with L the
    Lipschitz constant of the gradient, so the loss decreases monotonically.
    """
    config = config or TrainConfig()
    if not np.all(np.isfinite(data.X)):
        raise NonFiniteFeature("training features contain NaN or infinity")
    if len(np.unique(data.y)) < 2:
        raise SingleClass("training data needs both malicious and benign rows")

    mean = data.X.mean(axis=0)
    std = data.X.std(axis=0)
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    std = np.where(constant, 1.0, std)
    Z = (data.X - mean) / std
    Z[:, constant] = 0.0
    Z1 = np.hstack([Z, np.ones((len(Z), 1))])
    y = data.y.astype(float)

    lipschitz = 0.25 * np.linalg.eigvalsh(Z1.T @ Z1 / len(y))[-1] + config.l2
    step = 1.0 / lipschitz
    theta = np.zeros(Z1.shape[1])
    loss, grad = _loss_and_grad(Z1, y, theta, config.l2)
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        theta = theta - step * grad
        theta[:-1][constant] = 0.0
        new_loss, grad = _loss_and_grad(Z1, y, theta, config.l2)
        delta = loss - new_loss
        loss = new_loss
        if abs(delta) < config.tolerance:
            break
    return LinearClassifier(
        weights=theta[:-1].copy(),
        bias=float(theta[-1]),
        schema=tuple(data.schema),
        threshold=config.threshold,
        mean=mean,
        std=std,
        constant=constant,
        training_meta={"iterations": iterations, "final_loss": float(loss), "seed": config.seed},
    )


def predict_proba(model: LinearClassifier, x) -> float:
    if isinstance(x, FeatureVector):
        if x.schema != tuple(model.schema):
            raise SchemaMismatch("feature vector schema differs from the model's")
        x = x.values
    x = np.asarray(x, dtype=float)
    if x.shape != (len(model.schema),):
        raise SchemaMismatch(f"expected {len(model.schema)} features, got {x.shape}")
    return float(expit(model.standardize(x)[0] @ model.weights + model.bias))


def predict_proba_many(model: LinearClassifier, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != len(model.schema):
        raise SchemaMismatch(f"expected {len(model.schema)} features, got {X.shape[1]}")
    return expit(model.standardize(X) @ model.weights + model.bias)


# --- pipeline -------------------------------------------------------------


@dataclass
class PipelineResult:
    input_count: int
    step1_survivors: list
    step2_candidates: list
    per_domain_scores: dict
    lookup_errors: dict = field(default_factory=dict)

    def counts(self) -> dict:
        return {
            "newly_registered": self.input_count,
            "after_step1": len(self.step1_survivors),
            "after_step2": len(self.step2_candidates),
            "whois_unresolved": len(self.lookup_errors),
        }


Lookup = Callable[[list], list]


def run_pipeline(
    diff: ZoneDiff, step1: LinearClassifier, step2: LinearClassifier, whois: Lookup
) -> PipelineResult:
    """Filter a zone diff through both classifiers.

    ``whois`` maps a list of domains to ``LookupOutcome``-like
    ``(domain, record)`` pairs in the same order, e.g.
    ``functools.partial(lookup_batch, client=..., cache=..., budget=...)``.
    A survivor whose lookup fails stays a survivor but is never a candidate.
    """
    added = sorted(diff.added)
    scores: dict = {}
    if not added:
        return PipelineResult(0, [], [], scores)
    X1 = np.vstack([encode_domain(d).values for d in added])
    s1 = predict_proba_many(step1, X1)
    survivors = [d for d, s in zip(added, s1) if s >= step1.threshold]
    for d, s in zip(added, s1):
        scores[d] = (float(s), None)

    errors = {}
    resolved = []
    for outcome in whois(survivors) if survivors else []:
        domain, record = outcome
        if record is None:
            errors[domain] = getattr(outcome, "error", None) or "LookupFailed"
        else:
            resolved.append((domain, record))

    candidates = []
    if resolved:
        X2 = np.vstack([encode_domain(d, r).values for d, r in resolved])
        s2 = predict_proba_many(step2, X2)
        for (d, _), s in zip(resolved, s2):
            scores[d] = (scores[d][0], float(s))
            if s >= step2.threshold:
                candidates.append(d)
    return PipelineResult(len(added), survivors, candidates, scores, errors)


# --- evaluation -----------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> Optional[float]:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else None

    @property
    def recall(self) -> Optional[float]:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else None

    @property
    def f1(self) -> Optional[float]:
        p, r = self.precision, self.recall
        if p is None or r is None or p + r == 0:
            return None
        return 2 * p * r / (p + r)

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "EvalReport":
        y_true = np.asarray(y_true, dtype=bool)
        y_pred = np.asarray(y_pred, dtype=bool)
        return cls(
            tp=int(np.sum(y_true & y_pred)),
            fp=int(np.sum(~y_true & y_pred)),
            fn=int(np.sum(y_true & ~y_pred)),
            tn=int(np.sum(~y_true & ~y_pred)),
        )

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }


def summarize(reports: Sequence[EvalReport]) -> dict:
    """min / max / mean of each metric over the runs where it is defined."""
    out = {}
    for metric in ("precision", "recall", "f1"):
        vals = [getattr(r, metric) for r in reports if getattr(r, metric) is not None]
        if vals:
            out[metric] = {"min": min(vals), "max": max(vals), "mean": float(np.mean(vals))}
        else:
            out[metric] = {"min": None, "max": None, "mean": None}
    return out


def stratified_split(y: np.ndarray, test_fraction: float, rng: np.random.Generator):
    test = []
    for label in (BENIGN, MALICIOUS):
        idx = np.flatnonzero(y == label)
        n_test = max(1, int(round(test_fraction * len(idx))))
        test.extend(rng.permutation(idx)[:n_test].tolist())
    test = np.array(sorted(test))
    train_mask = np.ones(len(y), dtype=bool)
    train_mask[test] = False
    return np.flatnonzero(train_mask), test


def _cv_run(data, test_fraction, seed, run_index, config):
    rng = np.random.default_rng([seed, run_index])
    train_idx, test_idx = stratified_split(data.y, test_fraction, rng)
    model = train(data.subset(train_idx), config)
    proba = predict_proba_many(model, data.X[test_idx])
    return EvalReport.from_predictions(data.y[test_idx] == MALICIOUS, proba >= model.threshold)


def cross_validate(
    data: LabeledDataset,
    runs: int = 100,
    test_fraction: float = 0.1,
    seed: int = 0,
    config: Optional[TrainConfig] = None,
    n_jobs: int = 1,
) -> tuple[list, dict]:
    """Repeated stratified hold-out evaluation.

    Each run draws a fresh split of ``test_fraction`` of each class from an
    RNG seeded by ``(seed, run)``, so serial and parallel runs agree exactly.
    Returns the per-run reports and their min/max/mean summary.
    """
    if runs < 1 or not 0.0 < test_fraction < 1.0:
        raise ValueError("need runs >= 1 and 0 < test_fraction < 1")
    for label in (BENIGN, MALICIOUS):
        n = int(np.sum(data.y == label))
        n_test = max(1, int(round(test_fraction * n)))
        if n - n_test < 1:
            raise InsufficientData(f"class {label} has {n} rows; cannot split into train and test")
    config = config or TrainConfig(seed=seed)
    args = [(data, test_fraction, seed, i, config) for i in range(runs)]
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            reports = list(pool.map(lambda a: _cv_run(*a), args))
    else:
        reports = [_cv_run(*a) for a in args]
    return reports, summarize(reports)


def balance(
    malicious: Sequence, benign: Sequence, ratio: float = 1.0, seed: int = 0
) -> tuple[list, list]:
    """Downsample the benign pool to ``ratio`` x the malicious count (never upsample)."""
    rng = np.random.default_rng(seed)
    want = int(round(ratio * len(malicious)))
    if len(benign) > want:
        keep = np.sort(rng.choice(len(benign), size=want, replace=False))
        benign = [benign[i] for i in keep]
    return list(malicious), list(benign)


def build_dataset(
    malicious: Iterable[tuple],
    benign: Iterable[tuple],
    with_whois: bool,
    ratio: float = 1.0,
    seed: int = 0,
) -> LabeledDataset:
    """Encode ``(DomainName, WhoisRecord | None)`` pairs into a labeled dataset.

    With ``with_whois`` rows lacking a record are dropped (they cannot carry
    Step 2 features).
    """
    mal = [(d, r) for d, r in malicious if r is not None or not with_whois]
    ben = [(d, r) for d, r in benign if r is not None or not with_whois]
    mal, ben = balance(mal, ben, ratio, seed)
    rows = [(encode_domain(d, r if with_whois else None), MALICIOUS) for d, r in mal]
    rows += [(encode_domain(d, r if with_whois else None), BENIGN) for d, r in ben]
    return LabeledDataset.from_vectors(rows)
