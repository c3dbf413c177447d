"""Accuracy metrics, the Seen-Unseen accuracy Curve (SUC) and its area.

Accuracies are normalized by class size: the mean over classes of the
per-class hit rate.  ``A_S->T`` and ``A_U->T`` restrict the *truth* to seen or
unseen classes while predictions range over the joint label space.

The SUC is computed exactly.  Under calibrated stacking a row switches from its
best seen class to its best unseen class once gamma reaches
``max_s f_s(x) - max_u f_u(x)``, so sorting those critical values yields every
point of the piecewise-constant curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .combiner import critical_gammas, direct_stack, side_argmax
from .data import ScoreMatrix
from .errors import DegenerateCurve, EmptyClassInTest, KMismatch, LengthMismatch, MissingSide


@dataclass(frozen=True)
class SucPoint:
    gamma: float
    acc_seen_to_joint: float
    acc_unseen_to_joint: float


@dataclass(frozen=True, eq=False)
class SucCurve:
    """Points of the SUC ordered by increasing gamma.

    The first point is the gamma -> -inf extreme (nothing predicted unseen) and
    the last the gamma -> +inf extreme (everything predicted unseen).
    """

    gammas: np.ndarray
    acc_seen: np.ndarray
    acc_unseen: np.ndarray
    ausuc: float
    direct_stacking_point: SucPoint
    n_breakpoints: int

    @property
    def points(self) -> list[SucPoint]:
        return [
            SucPoint(float(g), float(s), float(u))
            for g, s, u in zip(self.gammas, self.acc_seen, self.acc_unseen)
        ]

    def __len__(self):
        return len(self.gammas)


def per_class_accuracy(predictions, truth, class_set) -> float:
    """Mean over ``class_set`` of the fraction of that class's samples predicted correctly."""
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape:
        raise LengthMismatch(f"{predictions.shape[0]} predictions for {truth.shape[0]} labels")
    rates = []
    for c in class_set:
        mask = truth == c
        n = int(mask.sum())
        if n == 0:
            raise EmptyClassInTest(f"class {c} has no test sample")
        rates.append(np.count_nonzero(predictions[mask] == c) / n)
    if not rates:
        raise EmptyClassInTest("empty class set")
    return float(np.mean(rates))


def flat_hit_at_k(topk_predictions, truth, k: int) -> float:
    """Fraction of rows whose true label is among the first k predictions (not class-normalized)."""
    topk = np.asarray(topk_predictions)
    truth = np.asarray(truth)
    if topk.ndim != 2 or k < 1 or k > topk.shape[1]:
        raise KMismatch(f"asked for hit@{k} with predictions of shape {topk.shape}")
    if topk.shape[0] != truth.shape[0]:
        raise LengthMismatch(f"{topk.shape[0]} prediction rows for {truth.shape[0]} labels")
    return float(np.mean(np.any(topk[:, :k] == truth[:, None], axis=1)))


class _SideBook:
    """Class bookkeeping for one side (seen or unseen) of a test set."""

    def __init__(self, truth_pos, rows, correct):
        classes, inverse, counts = np.unique(truth_pos[rows], return_inverse=True, return_counts=True)
        self.rows = rows
        self.class_of_row = np.full(truth_pos.shape[0], -1)
        self.class_of_row[rows] = inverse
        self.counts = counts
        self.n_classes = classes.size
        self.correct = correct & (self.class_of_row >= 0)
        self.correct_per_class = np.bincount(
            self.class_of_row[self.correct], minlength=self.n_classes
        )

    def accuracy(self, hits_per_class) -> np.ndarray:
        """Class-normalized accuracy for each row of an (n_points x n_classes) count table."""
        return np.mean(hits_per_class / self.counts, axis=-1)

    def flipped_counts(self, group_of_row, n_groups) -> np.ndarray:
        """Cumulative per-class count of correct rows flipped after each group."""
        table = np.zeros((n_groups, self.n_classes), dtype=np.int64)
        rows = np.flatnonzero(self.correct)
        np.add.at(table, (group_of_row[rows], self.class_of_row[rows]), 1)
        return np.cumsum(table, axis=0)


def _books(scores: ScoreMatrix, truth):
    truth = np.asarray(truth)
    if truth.shape != (scores.n_samples,):
        raise LengthMismatch(f"{truth.shape[0]} labels for {scores.n_samples} score rows")
    truth_pos = scores.partition.positions(truth)
    n_seen = scores.partition.n_seen
    s_pos, _, u_pos, _ = side_argmax(scores)
    seen_rows = truth_pos < n_seen
    if not seen_rows.any():
        raise MissingSide("test set has no seen-class sample")
    if seen_rows.all():
        raise MissingSide("test set has no unseen-class sample")
    seen = _SideBook(truth_pos, np.flatnonzero(seen_rows), s_pos == truth_pos)
    unseen = _SideBook(truth_pos, np.flatnonzero(~seen_rows), u_pos == truth_pos)
    return seen, unseen


def _sweep(scores: ScoreMatrix, truth, critical, inclusive: bool) -> SucCurve:
    """Curve for a rule that sends row i to the unseen side once gamma passes critical[i].

    ``inclusive`` means the row is unseen at gamma == critical[i] (calibrated
    stacking with prefer-unseen); otherwise only for gamma > critical[i]
    (the two-stage novelty rule).
    """
    seen, unseen = _books(scores, truth)
    critical = np.asarray(critical, dtype=np.float64)
    values, group_of_row = np.unique(critical, return_inverse=True)
    m = values.size
    seen_flip = seen.flipped_counts(group_of_row, m)
    unseen_flip = unseen.flipped_counts(group_of_row, m)
    zero_s = np.zeros((1, seen.n_classes), dtype=np.int64)
    zero_u = np.zeros((1, unseen.n_classes), dtype=np.int64)
    # point j: gamma = -inf, values[0], ..., values[m-1], +inf
    if inclusive:
        seen_flip = np.vstack([zero_s, seen_flip, seen_flip[-1:]])
        unseen_flip = np.vstack([zero_u, unseen_flip, unseen_flip[-1:]])
    else:
        seen_flip = np.vstack([zero_s, zero_s, seen_flip])
        unseen_flip = np.vstack([zero_u, zero_u, unseen_flip])
    acc_seen = seen.accuracy(seen.correct_per_class[None, :] - seen_flip)
    acc_unseen = unseen.accuracy(unseen_flip)
    gammas = np.concatenate([[-np.inf], values, [np.inf]])

    flipped_now = critical <= 0.0 if inclusive else critical < 0.0
    direct = SucPoint(
        0.0,
        float(seen.accuracy(np.bincount(
            seen.class_of_row[seen.correct & ~flipped_now], minlength=seen.n_classes))),
        float(unseen.accuracy(np.bincount(
            unseen.class_of_row[unseen.correct & flipped_now], minlength=unseen.n_classes))),
    )
    return SucCurve(
        gammas=gammas,
        acc_seen=acc_seen,
        acc_unseen=acc_unseen,
        ausuc=_staircase_area(acc_seen, acc_unseen),
        direct_stacking_point=direct,
        n_breakpoints=int(m),
    )


def _staircase_area(acc_seen, acc_unseen) -> float:
    # x = A_S->T decreases along the curve; each point owns the strip back to
    # its predecessor at its own height
    dx = acc_seen[:-1] - acc_seen[1:]
    return float(np.sum(dx * acc_unseen[1:]))


def exact_gamma_sweep(scores: ScoreMatrix, truth) -> SucCurve:
    """The full SUC of calibrated stacking (prefer-unseen at the boundary)."""
    return _sweep(scores, truth, critical_gammas(scores), inclusive=True)


def novelty_sweep(scores: ScoreMatrix, truth, novelty) -> SucCurve:
    """SUC of the two-stage rule as its threshold ``-gamma`` sweeps over all novelty values.

    Row i is unseen when ``novelty[i] > -gamma``; the within-side predictions
    are the per-side argmaxes of ``scores``.
    """
    novelty = np.asarray(novelty, dtype=np.float64).reshape(-1)
    if novelty.shape[0] != scores.n_samples:
        raise LengthMismatch(f"{novelty.shape[0]} novelty scores for {scores.n_samples} rows")
    return _sweep(scores, truth, -novelty, inclusive=False)


def ausuc(curve: SucCurve) -> float:
    """Area under the step curve in the (A_S->T, A_U->T) plane."""
    if len(curve) < 2:
        raise DegenerateCurve("a curve needs at least two points")
    return _staircase_area(np.asarray(curve.acc_seen), np.asarray(curve.acc_unseen))


def balance_fscore(curve: SucCurve) -> tuple[float, float]:
    """Curve point maximizing the harmonic mean of A_S->T and A_U->T (first wins ties)."""
    if len(curve) < 2:
        raise DegenerateCurve("a curve needs at least two points")
    s = np.asarray(curve.acc_seen)
    u = np.asarray(curve.acc_unseen)
    total = s + u
    f = np.divide(2.0 * s * u, total, out=np.zeros_like(total), where=total > 0)
    best = int(np.argmax(f))
    return float(curve.gammas[best]), float(f[best])


@dataclass(frozen=True)
class StandardMetrics:
    acc_unseen_to_unseen: float
    acc_seen_to_seen: float
    acc_unseen_to_joint: float
    acc_seen_to_joint: float

    def as_dict(self):
        return {
            "A_U->U": self.acc_unseen_to_unseen,
            "A_S->S": self.acc_seen_to_seen,
            "A_U->T": self.acc_unseen_to_joint,
            "A_S->T": self.acc_seen_to_joint,
        }


def standard_metrics(scores: ScoreMatrix, truth) -> StandardMetrics:
    """The four accuracies; the joint ones use direct stacking (gamma = 0)."""
    truth = np.asarray(truth)
    seen_book, unseen_book = _books(scores, truth)
    ids = np.asarray(scores.class_order)
    s_pos, _, u_pos, _ = side_argmax(scores)
    joint = direct_stack(scores)
    # classes in joint order, matching the curve's summation order bit for bit
    truth_pos = scores.partition.positions(truth)
    seen_classes = ids[np.unique(truth_pos[seen_book.rows])]
    unseen_classes = ids[np.unique(truth_pos[unseen_book.rows])]
    return StandardMetrics(
        acc_unseen_to_unseen=per_class_accuracy(ids[u_pos], truth, unseen_classes),
        acc_seen_to_seen=per_class_accuracy(ids[s_pos], truth, seen_classes),
        acc_unseen_to_joint=per_class_accuracy(joint, truth, unseen_classes),
        acc_seen_to_joint=per_class_accuracy(joint, truth, seen_classes),
    )
