"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with `pytest tests/test_acceptance.py -v -s` to see one [PASS]/[FAIL]
line per criterion.
"""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from labelforge import (
    AuditSession,
    EmbeddingStore,
    LabelValue,
    Status,
    Tier,
    TrainConfig,
    WorkflowConfig,
    consistency_tier,
    evaluate,
    expected_random_agreement,
    inconsistency_level,
    init_workflow,
    run_to_convergence,
    sampling_plan,
    train,
    wilson_interval,
)
from labelforge.duplicates import find_candidate_pairs
from labelforge.probe import logistic_gradient, logistic_loss

from conftest import NoisyBlobs, make_matrix
from test_probe import finite_difference_gradient

PAIR_UNIVERSE = 5068


@contextmanager
def criterion(name):
    started = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"\n[FAIL] {name}")
        raise
    else:
        print(f"\n[PASS] {name} ({time.monotonic() - started:.1f}s)")


def test_inconsistency_reproduction(pair_conflict_rows):
    with criterion("duplicate-pair inconsistency: 40 reference rows within ±0.001"):
        started = time.monotonic()
        anchors = {"Male": 0.005, "Eyeglasses": 0.022,
                   "Pointy_Nose": 0.425, "Blurry": 0.529}
        assert len(pair_conflict_rows) == 40
        for row in pair_conflict_rows:
            stats = inconsistency_level(
                row["attribute"], int(row["n_differ"]),
                int(row["n_p"]), int(row["n_n"]), PAIR_UNIVERSE)
            assert abs(stats.p_in - float(row["p_in"])) <= 1e-3, row["attribute"]
            if row["attribute"] in anchors:
                assert abs(stats.p_in - anchors[row["attribute"]]) <= 1e-3
        assert time.monotonic() - started < 1.0


def test_tier_reproduction(annotator_difference_rows):
    with criterion("consistency tiers: 12 HIGH / 8 MEDIUM / 20 LOW on 40 rows"):
        started = time.monotonic()
        assert len(annotator_difference_rows) == 40
        tiers = [consistency_tier(int(r["n_d"]), 1000)
                 for r in annotator_difference_rows]
        assert tiers.count(Tier.HIGH) == 12
        assert tiers.count(Tier.MEDIUM) == 8
        assert tiers.count(Tier.LOW) == 20
        assert time.monotonic() - started < 1.0


def test_random_agreement_anchors():
    with criterion("random-agreement anchors: f=0.5 -> 0.50, f=0.9 -> 0.82"):
        assert expected_random_agreement(0.5) == 0.50
        # 0.82 is not a representable double; the formula lands within 1 ulp
        assert abs(expected_random_agreement(0.9) - 0.82) <= math.ulp(0.82)


def _closed_stratum(n, n_wrong, target):
    rows = {f"s{i:05d}": [target.value] for i in range(n)}
    matrix = make_matrix(["attr"], rows)
    plan = sampling_plan(matrix, "attr", target, n, seed=0)
    session = AuditSession(plan)
    flipped = LabelValue.FALSE if target is LabelValue.TRUE else LabelValue.TRUE
    ids = list(plan.sample_ids)
    for image_id in ids:
        value = flipped if ids.index(image_id) < n_wrong else target
        session.record_label("a", image_id, value)
        session.record_label("b", image_id, value)
    session.close()
    return matrix, session


def test_error_rate_arithmetic():
    with criterion("audited error rates reproduce published percentages to 2 decimals"):
        from labelforge.audit import stratum_error

        cases = [(513, 107, LabelValue.FALSE, 20.86),
                 (500, 8, LabelValue.TRUE, 1.60),
                 (500, 196, LabelValue.FALSE, 39.20),
                 (500, 217, LabelValue.TRUE, 43.40)]
        for n, wrong, target, expected_pct in cases:
            matrix, session = _closed_stratum(n, wrong, target)
            stratum = stratum_error(session, matrix)
            assert round(100 * stratum.err, 2) == expected_pct


def test_wilson_coverage():
    with criterion("Wilson 95% CI coverage in [93%, 97%] at p=0.02/0.2/0.4, n=500"):
        started = time.monotonic()
        n = 500
        for p in (0.02, 0.2, 0.4):
            rng = np.random.default_rng(20240 + int(p * 100))
            covered = 0
            for _ in range(1000):
                lo, hi = wilson_interval(int(rng.binomial(n, p)), n)
                covered += lo <= p <= hi
            assert 930 <= covered <= 970, f"p={p}: {covered / 10:.1f}%"
        assert time.monotonic() - started < 10.0


def test_probe_numerics():
    with criterion("probe gradient matches finite differences; full-batch descent"):
        rng = np.random.default_rng(99)
        for _ in range(20):
            n = int(rng.integers(5, 40))
            dim = int(rng.integers(1, 11))
            X = rng.normal(size=(n, dim))
            y = (rng.random(n) < 0.5).astype(float)
            w = rng.normal(size=dim)
            b = float(rng.normal())
            l2 = float(rng.choice([0.0, 1e-4, 1e-2]))
            gw, gb = logistic_gradient(w, b, X, y, l2)
            fw, fb = finite_difference_gradient(w, b, X, y, l2)
            scale = max(np.linalg.norm(np.append(gw, gb)), 1e-12)
            assert np.linalg.norm(np.append(gw - fw, gb - fb)) / scale < 1e-5

        X = rng.normal(size=(300, 4))
        ids = [f"g{i}" for i in range(300)]
        store = EmbeddingStore.from_arrays(ids, X)
        labels = {ids[i]: X[i, 0] + 0.3 * X[i, 1] > 0 for i in range(300)}
        model = train(store, labels,
                      TrainConfig(epochs=200, learning_rate=1e-3,
                                  batch_size=300, seed=0))
        assert np.all(np.diff(model.loss_history) <= 1e-9)


def _run_workflow(seed):
    data = NoisyBlobs(n=50_000, dim=8, seed=seed)
    seed_labels, pool = data.split_seed(0.10)
    config = WorkflowConfig(k=3, seed=seed, probe=TrainConfig(seed=seed))
    state = init_workflow(seed_labels, pool, "attr", config)
    auditor = lambda ids: {i: data.truth[i] for i in ids}
    run_to_convergence(state, data.store, auditor)
    return data, state


def test_workflow_end_to_end():
    with criterion("synthetic cleaning workflow: CONVERGED <= 5 rounds, "
                   "true error < 5%, deterministic replay"):
        started = time.monotonic()
        data, state = _run_workflow(seed=0)
        assert state.status is Status.CONVERGED
        assert state.round <= 5
        assert data.true_error(state.cleaned_labels) < 0.05
        _, replay = _run_workflow(seed=0)
        assert replay.cleaned_labels == state.cleaned_labels
        assert time.monotonic() - started < 120.0


def test_clean_beats_noisy():
    with criterion("probe on workflow-cleaned labels beats noisy labels "
                   "by >= 2 points on clean test data, 5 seeds"):
        started = time.monotonic()
        for seed in range(5):
            data, state = _run_workflow(seed=seed)
            test_store, test_truth = data.sample_test_set(n=5000, seed=1000 + seed)
            probe_cfg = TrainConfig(seed=seed)
            clean_acc = evaluate(train(data.store, state.cleaned_labels, probe_cfg),
                                 test_store, test_truth)
            noisy_acc = evaluate(train(data.store, data.noisy, probe_cfg),
                                 test_store, test_truth)
            assert clean_acc - noisy_acc >= 0.02, \
                f"seed {seed}: clean {clean_acc:.4f} vs noisy {noisy_acc:.4f}"
        assert time.monotonic() - started < 60.0


def test_duplicate_detector_properties():
    with criterion("duplicate detector: threshold monotonicity and identity "
                   "gating over 1,000 random vector sets"):
        rng = np.random.default_rng(42)
        for case in range(1000):
            n = int(rng.integers(2, 8))
            dim = int(rng.integers(2, 5))
            vectors = rng.normal(size=(n, dim))
            ids = [f"v{i}" for i in range(n)]
            identity = {ids[i]: str(rng.integers(0, 3)) for i in range(n)}
            store = EmbeddingStore.from_arrays(ids, vectors, identity)
            t1, t2 = sorted(rng.uniform(-0.5, 1.0, size=2))
            loose = {(p.image_a, p.image_b) for p in find_candidate_pairs(store, t1)}
            tight = {(p.image_a, p.image_b) for p in find_candidate_pairs(store, t2)}
            assert tight <= loose
            for a, b in loose:
                assert identity[a] == identity[b]
