import datetime as dt
from functools import partial

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ransomcast.classifier import (
    EvalReport,
    LabeledDataset,
    LinearClassifier,
    TrainConfig,
    build_dataset,
    cross_validate,
    predict_proba,
    predict_proba_many,
    run_pipeline,
    summarize,
    train,
)
from ransomcast.domain_feed import DomainName, ZoneDiff
from ransomcast.errors import InsufficientData, NonFiniteFeature, SchemaMismatch, SingleClass
from ransomcast.features import STEP1_SCHEMA, encode_domain
from ransomcast.synthetic import benign_name, benign_whois, cerber_name, cerber_whois
from ransomcast.whois import LookupBudget, LookupOutcome, lookup_batch

D = dt.date
SCHEMA2 = ("x1", "x2")


def toy():
    X = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [0.5, 0.2],
                  [3, 3], [4, 3], [3, 4], [4, 4], [3.5, 3.8]], dtype=float)
    y = np.array([0] * 5 + [1] * 5)
    return LabeledDataset(X, y, SCHEMA2)


def test_train_separable_toy():
    data = toy()
    model = train(data)
    proba = predict_proba_many(model, data.X)
    assert np.array_equal(proba >= 0.5, data.y == 1)
    assert predict_proba(model, [4, 4]) > 0.5
    assert set(model.training_meta) == {"iterations", "final_loss", "seed"}


def test_train_errors():
    d = toy()
    with pytest.raises(SingleClass):
        train(LabeledDataset(d.X[5:], d.y[5:], SCHEMA2))
    X = d.X.copy()
    X[0, 0] = np.nan
    with pytest.raises(NonFiniteFeature):
        train(LabeledDataset(X, d.y, SCHEMA2))


def test_duplicated_rows_same_boundary():
    d = toy()
    twice = LabeledDataset(np.vstack([d.X, d.X]), np.r_[d.y, d.y], SCHEMA2)
    cfg = TrainConfig(max_iters=300, tolerance=0.0)
    a, b = train(d, cfg), train(twice, cfg)
    assert np.allclose(a.weights, b.weights, atol=1e-6) and abs(a.bias - b.bias) < 1e-6


def test_constant_column_pinned():
    d = toy()
    X = np.hstack([d.X, np.full((10, 1), 7.0)])
    model = train(LabeledDataset(X, d.y, ("x1", "x2", "c")))
    assert model.constant.tolist() == [False, False, True] and model.weights[2] == 0.0


def test_predict_proba_contract():
    zero = LinearClassifier(np.zeros(2), 0.0, SCHEMA2, 0.5, np.zeros(2), np.ones(2), np.zeros(2, bool))
    assert predict_proba(zero, [123.0, -4.0]) == 0.5
    with pytest.raises(SchemaMismatch):
        predict_proba(zero, [1.0, 2.0, 3.0])
    with pytest.raises(SchemaMismatch):
        predict_proba(zero, encode_domain(DomainName.parse("abc.top")))


def test_model_document_round_trip():
    model = train(toy())
    back = LinearClassifier.loads(model.dumps())
    assert back.dumps() == model.dumps()
    assert predict_proba(back, [2, 2]) == predict_proba(model, [2, 2])


def test_determinism():
    a, b = train(toy(), TrainConfig(seed=3)), train(toy(), TrainConfig(seed=3))
    assert a.dumps() == b.dumps()


@given(st.floats(0.01, 100), st.floats(-100, 100), st.booleans(), st.integers(0, 1))
def test_affine_rescaling_invariance(scale, shift, flip, col):
    d = toy()
    X = d.X.copy()
    X[:, col] = (-1 if flip else 1) * scale * X[:, col] + shift
    cfg = TrainConfig(max_iters=400, tolerance=0.0)
    p0 = predict_proba_many(train(d, cfg), d.X)
    p1 = predict_proba_many(train(LabeledDataset(X, d.y, SCHEMA2), cfg), X)
    assert np.max(np.abs(p0 - p1)) < 1e-9


# --- evaluation ------------------------------------------------------------------


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_eval_report_identities(tp, fp, fn, tn):
    r = EvalReport(tp, fp, fn, tn)
    if tp + fp:
        assert r.precision == tp / (tp + fp)
    else:
        assert r.precision is None
    if tp + fn:
        assert r.recall == tp / (tp + fn)
    else:
        assert r.recall is None
    if r.precision is not None and r.recall is not None and r.precision + r.recall > 0:
        assert r.f1 == 2 * r.precision * r.recall / (r.precision + r.recall)
        assert 0 <= r.f1 <= 1
    else:
        assert r.f1 is None


@given(arrays(bool, 30), arrays(bool, 30))
def test_eval_report_from_predictions(t, p):
    r = EvalReport.from_predictions(t, p)
    assert r.tp + r.fp + r.fn + r.tn == 30 and r.tp + r.fn == t.sum()


def test_summarize_layout():
    s = summarize([EvalReport(9, 1, 3, 10), EvalReport(10, 0, 0, 10)])
    assert s["precision"] == {"min": 0.9, "max": 1.0, "mean": 0.95}
    assert set(s) == {"precision", "recall", "f1"}


def test_cross_validate_separable_single_run():
    X = np.r_[np.random.default_rng(0).normal(0, 0.3, (20, 2)), np.random.default_rng(1).normal(5, 0.3, (20, 2))]
    data = LabeledDataset(X, np.r_[np.zeros(20), np.ones(20)], SCHEMA2)
    reports, summary = cross_validate(data, runs=1, test_fraction=0.1)
    assert reports[0].precision == reports[0].recall == reports[0].f1 == 1.0
    assert summary["f1"]["mean"] == 1.0


def test_cross_validate_insufficient():
    data = LabeledDataset(np.zeros((3, 2)), np.array([0, 1, 1]), SCHEMA2)
    with pytest.raises(InsufficientData):
        cross_validate(data, runs=2, test_fraction=0.1)


def test_cross_validate_parallel_matches_serial():
    d = toy()
    X = np.vstack([d.X + i * 0.01 for i in range(4)])
    data = LabeledDataset(X, np.tile(d.y, 4), SCHEMA2)
    serial, _ = cross_validate(data, runs=12, seed=5)
    parallel, _ = cross_validate(data, runs=12, seed=5, n_jobs=4)
    assert serial == parallel


# --- pipeline ---------------------------------------------------------------------


def trained_models(seed=0, n=300):
    rng = np.random.default_rng(seed)
    mal, ben = [], []
    for _ in range(n):
        d = cerber_name(rng).registered
        mal.append((d, cerber_whois(d, D(2017, 1, 2), rng)))
        b = benign_name(rng).registered
        ben.append((b, benign_whois(b, D(2016, 6, 1), rng)))
    return train(build_dataset(mal, ben, False)), train(build_dataset(mal, ben, True))


@pytest.fixture(scope="module")
def models():
    return trained_models()


def synthetic_diff(seed=11):
    rng = np.random.default_rng(seed)
    added, records = set(), {}
    while len(added) < 10:
        d = cerber_name(rng).registered
        added.add(d)
        records[d] = cerber_whois(d, D(2017, 3, 2), rng)
    while len(added) < 100:
        d = benign_name(rng).registered
        if d not in added:
            added.add(d)
            records[d] = benign_whois(d, D(2017, 3, 2), rng)
    return ZoneDiff(D(2017, 3, 1), D(2017, 3, 2), frozenset(added), frozenset()), records


def dict_lookup(records, domains):
    return [LookupOutcome(d, records.get(d)) for d in domains]


def test_pipeline_empty_diff(models):
    diff = ZoneDiff(D(2017, 3, 1), D(2017, 3, 2), frozenset(), frozenset())
    r = run_pipeline(diff, *models, whois=lambda ds: [])
    assert r.counts() == {"newly_registered": 0, "after_step1": 0, "after_step2": 0, "whois_unresolved": 0}


def test_pipeline_subset_chain(models):
    diff, records = synthetic_diff()
    r = run_pipeline(diff, *models, whois=partial(dict_lookup, records))
    assert set(r.step2_candidates) <= set(r.step1_survivors) <= diff.added
    assert len(r.step1_survivors) < 100
    assert all(0 <= s1 <= 1 and (s2 is None or 0 <= s2 <= 1) for s1, s2 in r.per_domain_scores.values())
    assert set(r.per_domain_scores) == diff.added


def test_pipeline_budget_exhausted(models):
    diff, _ = synthetic_diff()
    lookup = partial(lookup_batch, client=None, cache=None, budget=LookupBudget(0))
    r = run_pipeline(diff, *models, whois=lookup)
    assert r.step1_survivors and not r.step2_candidates
    assert set(r.lookup_errors) == set(r.step1_survivors)
    assert all(r.per_domain_scores[d][1] is None for d in r.step1_survivors)


MODELS = trained_models(seed=1, n=150)
DIFF = synthetic_diff(seed=12)


@given(st.floats(0.05, 0.95), st.floats(0.0, 0.04))
def test_threshold_monotonicity(t, bump):
    s1, s2 = MODELS
    diff, records = DIFF
    lookup = partial(dict_lookup, records)

    def with_thresholds(a, b):
        m1 = LinearClassifier.from_document({**s1.to_document(), "threshold": a})
        m2 = LinearClassifier.from_document({**s2.to_document(), "threshold": b})
        return run_pipeline(diff, m1, m2, lookup)

    lo, hi = with_thresholds(t, t), with_thresholds(min(t + bump, 0.99), t)
    assert set(hi.step1_survivors) <= set(lo.step1_survivors)
    lo2, hi2 = with_thresholds(t, t), with_thresholds(t, min(t + bump, 0.99))
    assert set(hi2.step2_candidates) <= set(lo2.step2_candidates)


def test_build_dataset_balances_and_drops_missing_whois():
    rng = np.random.default_rng(0)
    mal = [(cerber_name(rng).registered, None) for _ in range(10)]
    ben = [(benign_name(rng).registered, None) for _ in range(30)]
    ds = build_dataset(mal, ben, False, ratio=1.0, seed=0)
    assert ds.schema == STEP1_SCHEMA and int(ds.y.sum()) == 10 and len(ds) == 20
    with pytest.raises(InsufficientData):
        build_dataset(mal, ben, True)
