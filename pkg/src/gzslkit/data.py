"""Shared data model: feature sets, class partitions, semantic tables, scores.

All containers are frozen dataclasses whose arrays are stored as read-only
float64 (or int64) copies, so they can be shared freely between workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClassTooSmall,
    DataError,
    DimensionMismatch,
    EmptySeenSet,
    PartitionOverlap,
    UnknownLabel,
    ZeroVectorEmbedding,
)

EMBEDDING_KINDS = ("binary-attribute", "continuous-attribute", "word-vector", "g-attr")


def _frozen(array, dtype):
    out = np.array(array, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class LabeledFeatureSet:
    """N x D feature matrix with one integer class id per row."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features)
        if features.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got shape {features.shape}")
        n, d = features.shape
        if n < 1 or d < 1:
            raise DataError(f"feature matrix must be non-empty, got shape {features.shape}")
        features = _frozen(features, np.float64)
        if not np.all(np.isfinite(features)):
            bad = int(np.argwhere(~np.isfinite(features))[0, 0])
            raise DataError(f"non-finite feature value in row {bad}")
        labels = np.asarray(self.labels)
        if labels.shape != (n,):
            raise DimensionMismatch(f"expected {n} labels, got shape {labels.shape}")
        if labels.dtype.kind == "f":
            if not np.all(np.isfinite(labels)) or np.any(labels != np.round(labels)):
                raise DataError("labels must be integers")
        elif labels.dtype.kind not in "iu":
            raise DataError(f"labels must be integers, got dtype {labels.dtype}")
        labels = _frozen(labels, np.int64)
        if np.any(labels < 0):
            raise DataError("labels must be >= 0")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "LabeledFeatureSet":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledFeatureSet(self.features[indices], self.labels[indices])

    def class_indices(self, class_id) -> np.ndarray:
        return np.flatnonzero(self.labels == class_id)

    def restrict(self, classes) -> "LabeledFeatureSet":
        """Rows whose label is in ``classes``, original order kept."""
        return self.subset(np.flatnonzero(np.isin(self.labels, list(classes))))


@dataclass(frozen=True)
class ClassPartition:
    """Disjoint seen (S) and unseen (U) class ids; the joint order is S then U."""

    seen: tuple
    unseen: tuple
    _position: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        seen = tuple(int(c) for c in self.seen)
        unseen = tuple(int(c) for c in self.unseen)
        if len(seen) == 0:
            raise EmptySeenSet("the seen class set must contain at least one class")
        if len(set(seen)) != len(seen) or len(set(unseen)) != len(unseen):
            raise DataError("duplicate class id inside a side of the partition")
        overlap = sorted(set(seen) & set(unseen))
        if overlap:
            raise PartitionOverlap(f"classes {overlap} are both seen and unseen")
        object.__setattr__(self, "seen", seen)
        object.__setattr__(self, "unseen", unseen)
        object.__setattr__(self, "_position", {c: i for i, c in enumerate(seen + unseen)})

    @property
    def joint(self) -> tuple:
        return self.seen + self.unseen

    @property
    def n_seen(self) -> int:
        return len(self.seen)

    @property
    def n_unseen(self) -> int:
        return len(self.unseen)

    def __contains__(self, class_id) -> bool:
        return int(class_id) in self._position

    def is_seen(self, class_id) -> bool:
        return self._position.get(int(class_id), len(self.seen)) < len(self.seen)

    def positions(self, labels) -> np.ndarray:
        """Column index in the joint order of every label."""
        labels = np.asarray(labels, dtype=np.int64)
        out = np.empty(labels.shape, dtype=np.int64)
        for i, lab in enumerate(labels.ravel()):
            try:
                out.flat[i] = self._position[int(lab)]
            except KeyError:
                raise UnknownLabel(int(lab)) from None
        return out

    def seen_mask(self, labels) -> np.ndarray:
        return self.positions(labels) < len(self.seen)


@dataclass(frozen=True, eq=False)
class SemanticTable:
    """One embedding row per class id."""

    class_ids: tuple
    embeddings: np.ndarray
    kind: str = "continuous-attribute"

    def __post_init__(self):
        ids = tuple(int(c) for c in self.class_ids)
        if len(set(ids)) != len(ids):
            raise DataError("duplicate class id in semantic table")
        if self.kind not in EMBEDDING_KINDS:
            raise DataError(f"unknown embedding kind {self.kind!r}")
        emb = np.asarray(self.embeddings)
        if emb.ndim != 2 or emb.shape[0] != len(ids) or emb.shape[1] < 1:
            raise DimensionMismatch(
                f"embedding matrix shape {emb.shape} does not match {len(ids)} class ids"
            )
        emb = _frozen(emb, np.float64)
        if not np.all(np.isfinite(emb)):
            raise DataError("non-finite value in semantic table")
        object.__setattr__(self, "class_ids", ids)
        object.__setattr__(self, "embeddings", emb)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def rows(self, class_ids) -> np.ndarray:
        """Embedding matrix for ``class_ids`` in the requested order."""
        index = {c: i for i, c in enumerate(self.class_ids)}
        try:
            picks = [index[int(c)] for c in class_ids]
        except KeyError as exc:
            raise DataError(f"class {exc.args[0]} has no semantic embedding") from None
        return self.embeddings[picks]

    def select(self, class_ids) -> "SemanticTable":
        class_ids = [int(c) for c in class_ids]
        return SemanticTable(tuple(class_ids), self.rows(class_ids), self.kind)


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Discriminant values f_c(x) for every sample and every class in the joint order."""

    scores: np.ndarray
    partition: ClassPartition

    def __post_init__(self):
        scores = np.asarray(self.scores)
        if scores.ndim != 2 or scores.shape[1] != len(self.partition.joint):
            raise DimensionMismatch(
                f"score matrix shape {scores.shape} does not match "
                f"{len(self.partition.joint)} joint classes"
            )
        scores = _frozen(scores, np.float64)
        if not np.all(np.isfinite(scores)):
            raise DataError("non-finite entry in score matrix")
        object.__setattr__(self, "scores", scores)

    @property
    def class_order(self) -> tuple:
        return self.partition.joint

    @property
    def n_samples(self) -> int:
        return self.scores.shape[0]

    @property
    def seen_block(self) -> np.ndarray:
        return self.scores[:, : self.partition.n_seen]

    @property
    def unseen_block(self) -> np.ndarray:
        return self.scores[:, self.partition.n_seen :]


def validate_partition(partition: ClassPartition, data: LabeledFeatureSet):
    """Check every label of ``data`` lies in S or U; returns the pair unchanged."""
    if partition.n_seen == 0:
        raise EmptySeenSet("the seen class set must contain at least one class")
    known = np.array(partition.joint, dtype=np.int64)
    unknown = data.labels[~np.isin(data.labels, known)]
    if unknown.size:
        raise UnknownLabel(int(unknown[0]))
    return partition, data


def normalize_embeddings(table: SemanticTable) -> SemanticTable:
    """Scale every row to unit l2 norm; binary attribute tables are left alone."""
    if table.kind == "binary-attribute":
        return table
    norms = np.linalg.norm(table.embeddings, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroVectorEmbedding(
            f"class {table.class_ids[zero[0]]} has an all-zero {table.kind} embedding"
        )
    return SemanticTable(table.class_ids, table.embeddings / norms[:, None], table.kind)


def holdout_count(n: int, fraction: float) -> int:
    """ceil(fraction * n), robust to representation error in the product."""
    return math.ceil(round(fraction * n, 9))


def stratified_holdout(labels, classes, fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Per class, move ceil(fraction * n_c) randomly chosen rows to the held-out side.

    Returns sorted (kept, held_out) index arrays covering only rows of ``classes``.
    """
    if not 0.0 < fraction < 1.0:
        raise DataError(f"hold-out fraction must lie in (0, 1), got {fraction}")
    labels = np.asarray(labels)
    kept, held = [], []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        n_held = holdout_count(idx.size, fraction)
        if idx.size < 2 or n_held >= idx.size:
            raise ClassTooSmall(
                f"class {c} has {idx.size} samples; cannot hold out {n_held} and keep one"
            )
        perm = rng.permutation(idx)
        held.append(perm[:n_held])
        kept.append(perm[n_held:])
    kept = np.sort(np.concatenate(kept)) if kept else np.empty(0, np.int64)
    held = np.sort(np.concatenate(held)) if held else np.empty(0, np.int64)
    return kept, held


def split_seen_holdout(data: LabeledFeatureSet, partition: ClassPartition,
                       fraction: float = 0.2, seed: int = 0):
    """Hold out ``fraction`` of every seen class and all unseen rows as the test set."""
    validate_partition(partition, data)
    rng = np.random.default_rng(seed)
    train_idx, held_idx = stratified_holdout(data.labels, partition.seen, fraction, rng)
    unseen_idx = np.flatnonzero(~partition.seen_mask(data.labels))
    test_idx = np.sort(np.concatenate([held_idx, unseen_idx]))
    return data.subset(train_idx), data.subset(test_idx)
