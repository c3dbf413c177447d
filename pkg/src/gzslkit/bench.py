"""Trend experiments on the seeded synthetic benchmark.

Each function returns plain numbers so tests and demo scripts can check
directions (which strategy wins) without hard-coding absolute values.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .combiner import CalibrationRule, calibrated_stack, direct_stack
from .cv import evaluate_grid, make_fold_plan, select_by_accuracies, select_by_ausuc
from .data import ScoreMatrix, SemanticTable, stratified_holdout
from .metrics import (
    balance_fscore,
    exact_gamma_sweep,
    novelty_sweep,
    per_class_accuracy,
    standard_metrics,
)
from .novelty import fit_novelty_detector
from .scorers import ComposedModel, fit_prototype_model, gattr_embeddings, joint_scores
from .synthetic import BENCH_SPEC, SyntheticDataset, generate_synthetic, perturb_embeddings


def bench_dataset(seed: int | None = None, **overrides) -> SyntheticDataset:
    """The benchmark geometry, optionally re-drawn with another seed."""
    spec = BENCH_SPEC if seed is None else dataclasses.replace(BENCH_SPEC, seed=int(seed))
    if overrides:
        spec = dataclasses.replace(spec, **overrides)
    return generate_synthetic(spec)


def prototype_scores(ds: SyntheticDataset, semantics=None, test=None, **params) -> ScoreMatrix:
    semantics = ds.semantics if semantics is None else semantics
    test = ds.test if test is None else test
    model = fit_prototype_model(ds.train, ds.partition, semantics, **params)
    return joint_scores(model, test.features, ds.partition)


def collapse_experiment(ds: SyntheticDataset, inflation: float = 1.0) -> dict:
    """Inflate every seen score by a constant and compare the two stacking rules.

    Returns the accuracies under direct stacking, under calibrated stacking at
    the F-score balance point, and the per-side reference accuracies.
    """
    base = prototype_scores(ds)
    shifted = base.scores.copy()
    shifted[:, : ds.partition.n_seen] += inflation
    scores = ScoreMatrix(shifted, ds.partition)
    truth = ds.test.labels
    std = standard_metrics(scores, truth)
    curve = exact_gamma_sweep(scores, truth)
    gamma, fscore = balance_fscore(curve)

    seen_rows = ds.partition.seen_mask(truth)
    seen_cls = np.unique(truth[seen_rows])
    unseen_cls = np.unique(truth[~seen_rows])

    def side_accuracies(pred):
        return (per_class_accuracy(pred, truth, seen_cls), per_class_accuracy(pred, truth, unseen_cls))

    direct = side_accuracies(direct_stack(scores))
    calibrated = side_accuracies(calibrated_stack(scores, CalibrationRule(gamma)))
    return {
        "A_S->S": std.acc_seen_to_seen,
        "A_U->U": std.acc_unseen_to_unseen,
        "direct_A_S->T": direct[0],
        "direct_A_U->T": direct[1],
        "balance_gamma": gamma,
        "balance_fscore": fscore,
        "calibrated_A_S->T": calibrated[0],
        "calibrated_A_U->T": calibrated[1],
    }


def gattr_split(ds: SyntheticDataset, reserve_fraction: float = 0.8, seed: int = 0):
    """Split the unseen test rows into a pool for building embeddings and an
    evaluation part; seen test rows always stay in the evaluation part."""
    rng = np.random.default_rng([seed, 1])
    reserve, held = stratified_holdout(
        ds.test.labels, ds.partition.unseen, 1.0 - reserve_fraction, rng
    )
    seen_rows = np.flatnonzero(ds.partition.seen_mask(ds.test.labels))
    return ds.test.subset(reserve), ds.test.subset(np.sort(np.concatenate([seen_rows, held])))


def gattr_table(ds: SyntheticDataset, pool, shots=None, seed: int = 0) -> SemanticTable:
    seen = gattr_embeddings(ds.train, ds.partition.seen, shots, seed)
    unseen = gattr_embeddings(pool, ds.partition.unseen, shots, seed)
    return SemanticTable(
        ds.partition.joint, np.vstack([seen.embeddings, unseen.embeddings]), kind="g-attr"
    )


def gattr_vs_noise(seed: int, noise: float = 0.5) -> tuple[float, float]:
    """AUSUC with G-attr embeddings and with the same embeddings plus noise."""
    ds = bench_dataset(seed)
    pool, test = gattr_split(ds, seed=seed)
    clean = gattr_table(ds, pool, seed=seed)
    noisy = perturb_embeddings(clean, noise, seed)
    a_clean = exact_gamma_sweep(prototype_scores(ds, clean, test), test.labels).ausuc
    a_noisy = exact_gamma_sweep(prototype_scores(ds, noisy, test), test.labels).ausuc
    return a_clean, a_noisy


def few_shot_ausuc(shots=(1, 5, 25, "all"), rounds: int = 100, seed: int | None = None) -> dict:
    """AUSUC per resample round for G-attr built from ``m`` shots per class.

    ``"all"`` uses every available sample, so its value is the same in every round.
    """
    ds = bench_dataset(seed)
    pool, test = gattr_split(ds, seed=0 if seed is None else seed)

    def run(m, r):
        table = gattr_table(ds, pool, shots=m, seed=r)
        return exact_gamma_sweep(prototype_scores(ds, table, test), test.labels).ausuc

    out = {}
    for m in shots:
        if m in (None, "all"):
            out[m] = np.full(rounds, run(None, 0))
        else:
            out[m] = np.array([run(m, r) for r in range(rounds)])
    return out


def combiner_comparison(ds: SyntheticDataset, seed: int = 0, novelty_params=None) -> dict:
    """AUSUC of calibrated stacking and of the two novelty-gated rules on the same scores."""
    scores = prototype_scores(ds)
    truth = ds.test.labels
    result = {"calibrated": exact_gamma_sweep(scores, truth).ausuc}
    for kind in ("gaussian", "loop"):
        detector = fit_novelty_detector(ds.train, ds.semantics, kind, seed=seed,
                                        **(novelty_params or {}))
        novelty = detector.score(ds.test.features)
        result[kind] = novelty_sweep(scores, truth, novelty).ausuc
    return result


def selection_comparison(ds: SyntheticDataset, grid, factory, seed: int = 0,
                         n_folds: int = 5) -> dict:
    """Test AUSUC of the model chosen by CV AUSUC and of the accuracy-composed model."""
    plan = make_fold_plan(ds.train, n_folds=n_folds, seed=seed, classes=ds.partition.seen)
    evaluation = evaluate_grid(plan, grid, factory)
    by_ausuc = select_by_ausuc(plan, grid, factory, evaluation)
    by_acc = select_by_accuracies(plan, grid, factory, seen_evaluation=evaluation,
                                  unseen_evaluation=evaluation)
    truth = ds.test.labels

    def test_ausuc(model):
        return exact_gamma_sweep(joint_scores(model, ds.test.features, ds.partition), truth).ausuc

    best = factory(by_ausuc.best, ds.train, ds.partition)
    composed = ComposedModel(
        factory(by_acc.seen_params, ds.train, ds.partition),
        factory(by_acc.unseen_params, ds.train, ds.partition),
    )
    return {
        "ausuc_selected": dict(by_ausuc.best),
        "accuracy_selected": {"seen": dict(by_acc.seen_params), "unseen": dict(by_acc.unseen_params)},
        "ausuc_selection_test_ausuc": test_ausuc(best),
        "accuracy_selection_test_ausuc": test_ausuc(composed),
    }
