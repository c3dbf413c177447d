"""Joint decision rules over a ScoreMatrix.

* direct stacking: argmax over the whole joint label space;
* calibrated stacking: argmax of ``f_c(x) - gamma * [c is seen]``;
* two-stage novelty gating: seen-side argmax when ``N(x) <= threshold``,
  unseen-side argmax otherwise.

All rules return class ids (not column positions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ScoreMatrix
from .errors import ConfigError, KTooLarge, LengthMismatch

TIE_BREAKS = ("prefer-unseen", "prefer-seen", "lowest-index")


@dataclass(frozen=True)
class CalibrationRule:
    gamma: float = 0.0
    tie_break: str = "prefer-unseen"

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise ConfigError("gamma must be finite")
        if self.tie_break not in TIE_BREAKS:
            raise ConfigError(f"unknown tie_break {self.tie_break!r}")


@dataclass(frozen=True)
class NoveltyRule:
    """Gate ``N(x) > threshold`` sends a sample to the unseen side.

    ``detector`` is kept only for bookkeeping (the fitted novelty model that
    produced the scores); the rule itself consumes precomputed novelty values.
    """

    threshold: float
    detector: object = None

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ConfigError("novelty threshold must be finite")


def side_argmax(scores: ScoreMatrix):
    """Per row: (best seen position, best seen score, best unseen position, best unseen score).

    Positions index the joint order; ties go to the lowest index.
    """
    S = scores.seen_block
    U = scores.unseen_block
    s_pos = np.argmax(S, axis=1)
    u_pos = np.argmax(U, axis=1)
    rows = np.arange(scores.n_samples)
    return s_pos, S[rows, s_pos], u_pos + scores.partition.n_seen, U[rows, u_pos]


def _ids(scores: ScoreMatrix, positions) -> np.ndarray:
    return np.asarray(scores.class_order, dtype=np.int64)[positions]


def direct_stack(scores: ScoreMatrix) -> np.ndarray:
    return _ids(scores, np.argmax(scores.scores, axis=1))


def critical_gammas(scores: ScoreMatrix) -> np.ndarray:
    """Per row, max seen score minus max unseen score: the gamma at which the row flips."""
    return scores.seen_block.max(axis=1) - scores.unseen_block.max(axis=1)


def calibrated_stack(scores: ScoreMatrix, rule: CalibrationRule) -> np.ndarray:
    # The best calibrated class is the best seen class or the best unseen class,
    # and the unseen one wins iff max_s - max_u <= gamma.  Comparing that
    # difference (rather than max_s - gamma against max_u) keeps the rule
    # bit-identical to the breakpoints used by the gamma sweep.
    s_pos, s_val, u_pos, u_val = side_argmax(scores)
    delta = s_val - u_val
    if rule.tie_break == "prefer-unseen":
        to_unseen = delta <= rule.gamma
    else:
        # seen columns precede unseen ones, so lowest-index favours seen at a tie
        to_unseen = delta < rule.gamma
    return _ids(scores, np.where(to_unseen, u_pos, s_pos))


def calibrated_scores(scores: ScoreMatrix, gamma: float) -> np.ndarray:
    """The matrix ``f_c(x) - gamma * [c is seen]``."""
    out = np.array(scores.scores)
    out[:, : scores.partition.n_seen] -= gamma
    return out


def calibrated_topk(scores: ScoreMatrix, rule: CalibrationRule, k: int) -> np.ndarray:
    """The k best calibrated classes per row, best first.

    Equal calibrated scores are ordered by column index, except that a seen and
    an unseen column tied at the same value are ordered by ``rule.tie_break``.
    """
    n_classes = len(scores.class_order)
    if not 1 <= k <= n_classes:
        raise KTooLarge(f"k={k} outside [1, {n_classes}]")
    cal = calibrated_scores(scores, rule.gamma)
    index = np.broadcast_to(np.arange(n_classes), cal.shape)
    if rule.tie_break == "prefer-unseen":
        side = np.broadcast_to(np.arange(n_classes) < scores.partition.n_seen, cal.shape)
        # lexsort uses the last key as primary
        order = np.lexsort((index, side, -cal), axis=1)
    else:
        order = np.lexsort((index, -cal), axis=1)
    # f - gamma can round differently from the max_s - max_u comparison;
    # keep the first column identical to calibrated_stack
    first = scores.partition.positions(calibrated_stack(scores, rule))
    for row in np.flatnonzero(order[:, 0] != first):
        rest = order[row][order[row] != first[row]]
        order[row] = np.concatenate(([first[row]], rest))
    return _ids(scores, order[:, :k])


def novelty_two_stage(scores: ScoreMatrix, novelty, rule: NoveltyRule) -> np.ndarray:
    novelty = np.asarray(novelty, dtype=np.float64).reshape(-1)
    if novelty.shape[0] != scores.n_samples:
        raise LengthMismatch(
            f"{novelty.shape[0]} novelty scores for {scores.n_samples} samples"
        )
    s_pos, _, u_pos, _ = side_argmax(scores)
    return _ids(scores, np.where(novelty > rule.threshold, u_pos, s_pos))


def novelty_topk(scores: ScoreMatrix, novelty, rule: NoveltyRule, k: int) -> np.ndarray:
    """Two-stage top-k: all k labels come from the side selected by the gate."""
    novelty = np.asarray(novelty, dtype=np.float64).reshape(-1)
    if novelty.shape[0] != scores.n_samples:
        raise LengthMismatch(
            f"{novelty.shape[0]} novelty scores for {scores.n_samples} samples"
        )
    n_seen, n_unseen = scores.partition.n_seen, scores.partition.n_unseen
    if not 1 <= k <= min(n_seen, n_unseen):
        raise KTooLarge(f"k={k} exceeds the smaller side ({min(n_seen, n_unseen)} classes)")
    seen_top = np.argsort(-scores.seen_block, axis=1, kind="stable")[:, :k]
    unseen_top = np.argsort(-scores.unseen_block, axis=1, kind="stable")[:, :k] + n_seen
    gate = (novelty > rule.threshold)[:, None]
    return _ids(scores, np.where(gate, unseen_top, seen_top))


def boundary_ties(scores: ScoreMatrix, gamma: float) -> np.ndarray:
    """Rows where the calibrated seen and unseen maxima coincide exactly."""
    return np.flatnonzero(critical_gammas(scores) == gamma)
