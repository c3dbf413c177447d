"""Hyperparameter selection by class-wise cross-validation.

The seen classes are dealt into folds with disjoint label sets, and each
fold's samples are split 80/20 into pseudo-train and pseudo-test parts.  In
round r the pseudo-train parts of the other folds train a model whose classes
act as pseudo-seen; validation uses their pseudo-test parts together with the
pseudo-train part of fold r, whose classes act as pseudo-unseen.

A scorer factory is any callable ``factory(params, train, partition)`` that
returns an object with ``seen_scores(X)`` and ``unseen_scores(X)`` methods.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ClassPartition, LabeledFeatureSet, stratified_holdout
from .errors import EmptyGrid, TooFewClasses
from .metrics import exact_gamma_sweep, standard_metrics
from .scorers import joint_scores

METRICS = ("ausuc", "acc_seen_to_seen", "acc_unseen_to_unseen")


@dataclass(frozen=True, eq=False)
class ClasswiseFoldPlan:
    data: LabeledFeatureSet
    folds: tuple
    pseudo_train: tuple
    pseudo_test: tuple
    seed: int

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def round_split(self, held_out: int):
        """(partition, training indices, validation indices) for one round."""
        retained = [f for f in range(self.n_folds) if f != held_out]
        seen = [c for f in retained for c in self.folds[f]]
        partition = ClassPartition(tuple(seen), tuple(self.folds[held_out]))
        train_idx = np.sort(np.concatenate([self.pseudo_train[f] for f in retained]))
        val_idx = np.sort(
            np.concatenate([self.pseudo_test[f] for f in retained] + [self.pseudo_train[held_out]])
        )
        return partition, train_idx, val_idx

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "folds": [list(f) for f in self.folds],
            "pseudo_train": [p.tolist() for p in self.pseudo_train],
            "pseudo_test": [p.tolist() for p in self.pseudo_test],
        }


def make_fold_plan(train: LabeledFeatureSet, n_folds: int = 5, seed: int = 0,
                   classes=None, test_fraction: float = 0.2) -> ClasswiseFoldPlan:
    """Deal the shuffled classes round-robin into folds, then split each fold 80/20 per class."""
    if classes is None:
        classes = np.unique(train.labels)
    classes = [int(c) for c in classes]
    if len(classes) < n_folds:
        raise TooFewClasses(f"{len(classes)} classes cannot fill {n_folds} class-disjoint folds")
    rng = np.random.default_rng(seed)
    order = [classes[i] for i in rng.permutation(len(classes))]
    folds = tuple(tuple(order[f::n_folds]) for f in range(n_folds))
    pseudo_train, pseudo_test = [], []
    for fold in folds:
        kept, held = stratified_holdout(train.labels, fold, test_fraction, rng)
        pseudo_train.append(kept)
        pseudo_test.append(held)
    return ClasswiseFoldPlan(train, folds, tuple(pseudo_train), tuple(pseudo_test), int(seed))


def evaluate_round(plan: ClasswiseFoldPlan, held_out: int, params, scorer_factory) -> dict:
    """AUSUC, A_S->S and A_U->U on one round's validation set."""
    partition, train_idx, val_idx = plan.round_split(held_out)
    model = scorer_factory(params, plan.data.subset(train_idx), partition)
    val = plan.data.subset(val_idx)
    scores = joint_scores(model, val.features, partition)
    curve = exact_gamma_sweep(scores, val.labels)
    std = standard_metrics(scores, val.labels)
    return {
        "ausuc": curve.ausuc,
        "acc_seen_to_seen": std.acc_seen_to_seen,
        "acc_unseen_to_unseen": std.acc_unseen_to_unseen,
    }


def cv_round(plan: ClasswiseFoldPlan, held_out: int, params, scorer_factory) -> float:
    return evaluate_round(plan, held_out, params, scorer_factory)["ausuc"]


@dataclass(frozen=True, eq=False)
class GridEvaluation:
    """Per-candidate, per-round validation metrics (candidates x rounds arrays)."""

    candidates: tuple
    rounds: dict = field(default_factory=dict)

    def mean(self, metric: str) -> np.ndarray:
        return self.rounds[metric].mean(axis=1)

    def to_dict(self) -> dict:
        return {
            "candidates": [dict(c) for c in self.candidates],
            "rounds": {m: v.tolist() for m, v in self.rounds.items()},
            "means": {m: self.mean(m).tolist() for m in self.rounds},
        }


def evaluate_grid(plan: ClasswiseFoldPlan, grid, scorer_factory) -> GridEvaluation:
    grid = tuple(grid)
    if not grid:
        raise EmptyGrid("the hyperparameter grid is empty")
    rounds = {m: np.empty((len(grid), plan.n_folds)) for m in METRICS}
    for i, params in enumerate(grid):
        for r in range(plan.n_folds):
            result = evaluate_round(plan, r, params, scorer_factory)
            for m in METRICS:
                rounds[m][i, r] = result[m]
    return GridEvaluation(grid, rounds)


def _best(values) -> int:
    # np.argmax returns the first maximum, i.e. the earliest candidate in grid order
    return int(np.argmax(values))


@dataclass(frozen=True, eq=False)
class AusucSelection:
    best: dict
    best_index: int
    evaluation: GridEvaluation

    @property
    def mean_ausuc(self) -> np.ndarray:
        return self.evaluation.mean("ausuc")


def select_by_ausuc(plan: ClasswiseFoldPlan, hyperparam_grid, scorer_factory,
                    evaluation: GridEvaluation | None = None) -> AusucSelection:
    """Candidate with the highest AUSUC averaged over the rounds."""
    if evaluation is None:
        evaluation = evaluate_grid(plan, hyperparam_grid, scorer_factory)
    best = _best(evaluation.mean("ausuc"))
    return AusucSelection(evaluation.candidates[best], best, evaluation)


@dataclass(frozen=True, eq=False)
class AccuracySelection:
    seen_params: dict
    unseen_params: dict
    seen_index: int
    unseen_index: int
    seen_evaluation: GridEvaluation
    unseen_evaluation: GridEvaluation


def select_by_accuracies(plan: ClasswiseFoldPlan, seen_grid, seen_factory,
                         unseen_grid=None, unseen_factory=None,
                         seen_evaluation: GridEvaluation | None = None,
                         unseen_evaluation: GridEvaluation | None = None) -> AccuracySelection:
    """Pick seen-side hyperparameters by A_S->S and unseen-side ones by A_U->U.

    Both use the rounds of ``plan``: A_S->S on the pseudo-test parts of the
    retained folds, A_U->U on the held-out fold.  The two picks are meant to
    be combined with :class:`gzslkit.scorers.ComposedModel`.
    """
    if unseen_grid is None:
        unseen_grid = seen_grid
    if unseen_factory is None:
        unseen_factory = seen_factory
    if seen_evaluation is None:
        seen_evaluation = evaluate_grid(plan, seen_grid, seen_factory)
    if unseen_evaluation is None:
        if unseen_factory is seen_factory and tuple(unseen_grid) == seen_evaluation.candidates:
            unseen_evaluation = seen_evaluation
        else:
            unseen_evaluation = evaluate_grid(plan, unseen_grid, unseen_factory)
    s = _best(seen_evaluation.mean("acc_seen_to_seen"))
    u = _best(unseen_evaluation.mean("acc_unseen_to_unseen"))
    return AccuracySelection(
        seen_evaluation.candidates[s],
        unseen_evaluation.candidates[u],
        s,
        u,
        seen_evaluation,
        unseen_evaluation,
    )
