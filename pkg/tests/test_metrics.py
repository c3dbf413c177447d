import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from gzslkit.combiner import CalibrationRule, calibrated_stack, calibrated_topk
from gzslkit.data import ClassPartition, ScoreMatrix
from gzslkit.errors import DegenerateCurve, EmptyClassInTest, KMismatch, MissingSide
from gzslkit.metrics import (
    SucCurve,
    SucPoint,
    ausuc,
    balance_fscore,
    exact_gamma_sweep,
    flat_hit_at_k,
    novelty_sweep,
    per_class_accuracy,
    standard_metrics,
)
from gzslkit.novelty import implicit_novelty


def test_per_class_accuracy_normalizes_by_class_size():
    truth = np.array([0] * 10 + [1])
    pred = np.array([0] * 5 + [1] * 5 + [1])
    assert per_class_accuracy(pred, truth, [0, 1]) == pytest.approx(0.75)
    assert per_class_accuracy(truth, truth, [0, 1]) == 1.0
    balanced = np.array([0, 0, 1, 1])
    assert per_class_accuracy([0, 1, 1, 1], balanced, [0, 1]) == pytest.approx(0.75)
    with pytest.raises(EmptyClassInTest):
        per_class_accuracy(pred, truth, [0, 7])


def test_flat_hit_at_k():
    truth = np.array([1, 2, 3])
    top = np.array([[1, 9], [9, 2], [9, 8]])
    assert flat_hit_at_k(top[:, :1], truth, 1) == pytest.approx(1 / 3)
    assert flat_hit_at_k(top, truth, 2) == pytest.approx(2 / 3)
    with pytest.raises(KMismatch):
        flat_hit_at_k(top, truth, 3)


def test_hit_at_k_grows_with_k_and_is_one_at_full_k():
    rng = np.random.default_rng(0)
    p = ClassPartition((0, 1, 2), (3, 4))
    s = ScoreMatrix(rng.normal(size=(60, 5)), p)
    truth = rng.integers(0, 5, 60)
    rule = CalibrationRule(0.3)
    hits = [flat_hit_at_k(calibrated_topk(s, rule, k), truth, k) for k in range(1, 6)]
    assert hits == sorted(hits)
    assert hits[-1] == 1.0
    assert hits[0] == np.mean(calibrated_stack(s, rule) == truth)


# toy matrix: 2 seen classes, 1 unseen
TOY_P = ClassPartition((0, 1), (2,))
TOY = np.array([
    [0.9, 0.2, 0.5],  # truth 0, delta 0.4
    [0.1, 0.6, 0.3],  # truth 1, delta 0.3
    [0.7, 0.1, 0.6],  # truth 2, delta 0.1
])
TOY_TRUTH = np.array([0, 1, 2])


def test_toy_curve_by_hand():
    curve = exact_gamma_sweep(ScoreMatrix(TOY, TOY_P), TOY_TRUTH)
    np.testing.assert_array_equal(curve.gammas, [-np.inf, 0.09999999999999998, 0.3, 0.4, np.inf])
    np.testing.assert_array_equal(curve.acc_seen, [1.0, 1.0, 0.5, 0.0, 0.0])
    np.testing.assert_array_equal(curve.acc_unseen, [0.0, 1.0, 1.0, 1.0, 1.0])
    assert curve.ausuc == 1.0
    assert curve.n_breakpoints == 3
    assert curve.direct_stacking_point == SucPoint(0.0, 1.0, 0.0)


def test_toy_curve_matches_dense_grid_pointwise():
    # dyadic copy of the toy matrix so the oracle grid never hits a breakpoint
    scores = np.round(TOY * 1024) / 1024
    curve = exact_gamma_sweep(ScoreMatrix(scores, TOY_P), TOY_TRUTH)
    _, x, y = oracles.grid_ausuc(scores, TOY_TRUTH, 2)
    grid_states = {(float(a), float(b)) for a, b in zip(x, y)}
    curve_states = set(zip(curve.acc_seen.tolist(), curve.acc_unseen.tolist()))
    assert grid_states == curve_states


def test_random_matrix_matches_grid_oracle():
    rng = np.random.default_rng(7)
    truth = np.concatenate([np.arange(5), rng.integers(0, 5, 195)])
    scores = rng.integers(0, 1025, (200, 5)) / 1024.0
    p = ClassPartition((0, 1, 2), (3, 4))
    expected, _, _ = oracles.grid_ausuc(scores, truth, 3)
    assert abs(exact_gamma_sweep(ScoreMatrix(scores, p), truth).ausuc - expected) <= 1e-9


def test_extremes_are_restricted_accuracies():
    rng = np.random.default_rng(3)
    p = ClassPartition((0, 1, 2), (3, 4))
    s = ScoreMatrix(rng.normal(size=(80, 5)), p)
    truth = np.concatenate([np.arange(5), rng.integers(0, 5, 75)])
    curve = exact_gamma_sweep(s, truth)
    std = standard_metrics(s, truth)
    assert curve.acc_unseen[0] == 0.0
    assert curve.acc_seen[0] == std.acc_seen_to_seen
    assert curve.acc_seen[-1] == 0.0
    assert curve.acc_unseen[-1] == std.acc_unseen_to_unseen
    assert ausuc(curve) == curve.ausuc


def test_wrong_constant_scorer_has_zero_area():
    scores = np.zeros((4, 4))
    scores[:, 1] = 1.0  # always predicts seen class 1 ...
    scores[:, 3] = 0.5  # ... or unseen class 3
    truth = np.array([0, 0, 2, 2])
    p = ClassPartition((0, 1), (2, 3))
    assert exact_gamma_sweep(ScoreMatrix(scores, p), truth).ausuc == 0.0


def test_missing_side():
    s = ScoreMatrix(np.zeros((2, 3)), TOY_P)
    with pytest.raises(MissingSide):
        exact_gamma_sweep(s, [0, 1])
    with pytest.raises(MissingSide):
        exact_gamma_sweep(s, [2, 2])


def _toy_curve(points):
    s, u = np.array(points, dtype=float).T
    g = np.arange(len(points), dtype=float)
    return SucCurve(g, s, u, 0.0, SucPoint(0.0, s[0], u[0]), len(points) - 2)


def test_balance_fscore():
    gamma, f = balance_fscore(_toy_curve([(0.9, 0.1), (0.6, 0.6), (0.1, 0.9)]))
    assert gamma == 1.0 and f == pytest.approx(0.6)
    gamma, f = balance_fscore(_toy_curve([(0.0, 0.0), (1.0, 1.0), (0.0, 1.0)]))
    assert f == 1.0
    # ties go to the smaller gamma
    gamma, _ = balance_fscore(_toy_curve([(0.8, 0.2), (0.2, 0.8)]))
    assert gamma == 0.0
    with pytest.raises(DegenerateCurve):
        balance_fscore(_toy_curve([(1.0, 0.0)]))
    with pytest.raises(DegenerateCurve):
        ausuc(_toy_curve([(1.0, 0.0)]))


def test_standard_metrics_single_class_per_side():
    p = ClassPartition((0,), (1,))
    s = ScoreMatrix(np.array([[0.9, 0.1], [0.6, 0.4], [0.3, 0.7]]), p)
    m = standard_metrics(s, [0, 1, 1])
    # within a side there is only one choice
    assert m.acc_seen_to_seen == 1.0 and m.acc_unseen_to_unseen == 1.0
    assert m.acc_seen_to_joint == 1.0 and m.acc_unseen_to_joint == 0.5
    assert m.as_dict()["A_U->T"] == 0.5


def test_seen_bias_collapses_unseen_joint_accuracy():
    rng = np.random.default_rng(11)
    p = ClassPartition((0, 1, 2), (3, 4))
    truth = np.repeat(np.arange(5), 20)
    base = rng.normal(size=(100, 5)) * 0.1
    base[np.arange(100), truth] += 1.0
    biased = base.copy()
    biased[:, :3] += 5.0
    m0 = standard_metrics(ScoreMatrix(base, p), truth)
    m1 = standard_metrics(ScoreMatrix(biased, p), truth)
    assert m1.acc_unseen_to_joint == 0.0
    assert m1.acc_unseen_to_unseen == m0.acc_unseen_to_unseen
    assert m1.acc_seen_to_joint == m1.acc_seen_to_seen


def test_implicit_novelty_sweep_has_the_same_area():
    rng = np.random.default_rng(5)
    p = ClassPartition((0, 1, 2), (3, 4))
    s = ScoreMatrix(rng.normal(size=(150, 5)), p)
    truth = rng.integers(0, 5, 150)
    a = exact_gamma_sweep(s, truth)
    b = novelty_sweep(s, truth, implicit_novelty(s))
    assert b.ausuc == pytest.approx(a.ausuc, abs=1e-12)


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 60), shift=st.floats(-100, 100))
@settings(max_examples=60, deadline=None)
def test_curve_laws_and_row_shift_invariance(seed, n, shift):
    rng = np.random.default_rng(seed)
    p = ClassPartition((0, 1), (2, 3, 4))
    truth = np.concatenate([[0, 3], rng.integers(0, 5, n)])
    values = rng.integers(-4, 5, (truth.size, 5)) / 4.0  # coarse, so ties occur
    curve = exact_gamma_sweep(ScoreMatrix(values, p), truth)
    assert np.all(np.diff(curve.acc_unseen) >= 0)
    assert np.all(np.diff(curve.acc_seen) <= 0)
    assert 0.0 <= curve.ausuc <= 1.0
    row_shift = rng.integers(-8, 9, (truth.size, 1)) / 4.0 + np.round(shift)
    shifted = exact_gamma_sweep(ScoreMatrix(values + row_shift, p), truth)
    np.testing.assert_array_equal(shifted.acc_seen, curve.acc_seen)
    np.testing.assert_array_equal(shifted.acc_unseen, curve.acc_unseen)
