"""Discriminant scoring functions for seen and unseen classes.

Seen classes get a regularized one-vs-rest linear scorer.  Unseen classes are
scored either ConSE-style (cosine between the probability-weighted mixture of
seen embeddings and each class embedding) or by similarity to a class
prototype such as a G-attr embedding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, softmax

from .data import (
    ClassPartition,
    LabeledFeatureSet,
    ScoreMatrix,
    SemanticTable,
    normalize_embeddings,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateFeatures,
    DimensionMismatch,
    NotEnoughShots,
    RowCountMismatch,
    SingleClass,
    ZeroVectorEmbedding,
)

LOSSES = ("logistic", "squared-hinge")
SIMILARITIES = ("cosine", "dot", "negative-euclidean")


def _check_features(features, dim=None) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionMismatch(f"features must be 2-D, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise DimensionMismatch(f"expected {dim} feature columns, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise DegenerateFeatures("NaN or infinite feature value")
    return X


@dataclass(frozen=True, eq=False)
class LinearScorer:
    """Per-class linear scores ``w_c . x + b_c``."""

    weights: np.ndarray
    bias: np.ndarray
    class_order: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        W = np.array(self.weights, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        order = tuple(int(c) for c in self.class_order)
        if W.ndim != 2 or W.shape[0] != len(order) or b.shape != (len(order),):
            raise DimensionMismatch(
                f"weights {W.shape} / bias {b.shape} inconsistent with {len(order)} classes"
            )
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise DataError("non-finite linear scorer parameters")
        W.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "class_order", order)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def decision_function(self, features) -> np.ndarray:
        X = _check_features(features, self.dim)
        return X @ self.weights.T + self.bias

    def to_dict(self) -> dict:
        return {
            "format": "gzslkit.linear-scorer",
            "version": 1,
            "class_order": list(self.class_order),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearScorer":
        if doc.get("format") != "gzslkit.linear-scorer":
            raise DataError("not a linear scorer document")
        return cls(
            weights=np.array(doc["weights"], dtype=np.float64).reshape(len(doc["class_order"]), -1),
            bias=doc["bias"],
            class_order=doc["class_order"],
            metadata=doc.get("metadata", {}),
        )


def _ovr_objective(params, X, Y, reg, loss):
    """Sum over classes of mean binary loss + reg/2 ||w_c||^2 (bias unpenalized)."""
    n, d = X.shape
    C = Y.shape[1]
    P = params.reshape(C, d + 1)
    W, b = P[:, :d], P[:, d]
    margin = Y * (X @ W.T + b)
    if loss == "logistic":
        value = np.logaddexp(0.0, -margin).sum() / n
        dmargin = -expit(-margin)
    else:
        slack = np.maximum(0.0, 1.0 - margin)
        value = (slack**2).sum() / n
        dmargin = -2.0 * slack
    value += 0.5 * reg * np.sum(W * W)
    G = (dmargin * Y) / n
    grad = np.empty_like(P)
    grad[:, :d] = G.T @ X + reg * W
    grad[:, d] = G.sum(axis=0)
    return value, grad.ravel()


def train_linear_seen(
    train: LabeledFeatureSet,
    regularization: float = 1.0,
    classes=None,
    loss: str = "logistic",
    tol: float = 1e-6,
    max_iter: int = 2000,
) -> LinearScorer:
    """Train l2-regularized one-vs-rest linear scorers with L-BFGS.

    The per-class problems are independent; they are solved jointly as one
    separable convex problem.  ``metadata`` records the objective after every
    iteration and the final gradient norm, which is compared against ``tol``.
    """
    if loss not in LOSSES:
        raise ConfigError(f"unknown loss {loss!r}; expected one of {LOSSES}")
    if not regularization > 0:
        raise ConfigError("regularization must be positive")
    if classes is None:
        classes = np.unique(train.labels)
    classes = [int(c) for c in classes]
    if len(classes) < 2:
        raise SingleClass(f"one-vs-rest training needs >= 2 classes, got {classes}")
    X = _check_features(train.features)
    counts = [int(np.sum(train.labels == c)) for c in classes]
    if min(counts) < 1:
        raise DataError(f"class {classes[counts.index(min(counts))]} has no training sample")
    Y = np.where(train.labels[:, None] == np.array(classes)[None, :], 1.0, -1.0)

    history = []
    x0 = np.zeros(len(classes) * (X.shape[1] + 1))
    history.append(_ovr_objective(x0, X, Y, regularization, loss)[0])

    def record(intermediate_result):
        history.append(float(intermediate_result.fun))

    result = minimize(
        _ovr_objective,
        x0,
        args=(X, Y, regularization, loss),
        jac=True,
        method="L-BFGS-B",
        callback=record,
        options={"maxiter": max_iter, "gtol": tol, "ftol": 1e-15, "maxcor": 20},
    )
    grad_norm = float(np.max(np.abs(result.jac)))
    converged = grad_norm <= tol
    if not converged:
        warnings.warn(
            f"linear scorer gradient norm {grad_norm:.3g} above tolerance {tol:.3g} "
            f"after {result.nit} iterations",
            RuntimeWarning,
            stacklevel=2,
        )
    P = result.x.reshape(len(classes), X.shape[1] + 1)
    return LinearScorer(
        weights=P[:, :-1],
        bias=P[:, -1],
        class_order=tuple(classes),
        metadata={
            "loss": loss,
            "regularization": float(regularization),
            "objective": float(result.fun),
            "objective_history": history,
            "iterations": int(result.nit),
            "gradient_norm": grad_norm,
            "tolerance": float(tol),
            "converged": bool(converged),
        },
    )


def predict_proba(model: LinearScorer, features) -> np.ndarray:
    """Softmax (temperature 1) over the class scores."""
    return softmax(model.decision_function(features), axis=1)


@dataclass(frozen=True, eq=False)
class ConseScorer:
    """Convex combination of the top-t seen-class embeddings, weighted by probability."""

    base: LinearScorer
    seen_semantics: SemanticTable
    top_t: int = 10

    def __post_init__(self):
        n_seen = len(self.base.class_order)
        if not 1 <= self.top_t <= n_seen:
            raise ConfigError(f"top_t must lie in [1, {n_seen}], got {self.top_t}")
        table = normalize_embeddings(self.seen_semantics.select(self.base.class_order))
        object.__setattr__(self, "seen_semantics", table)


def predicted_embedding(scorer: ConseScorer, features) -> np.ndarray:
    """s(x): renormalized top-t probabilities times the matching seen embeddings."""
    proba = predict_proba(scorer.base, features)
    top = np.argsort(-proba, axis=1, kind="stable")[:, : scorer.top_t]
    weights = np.take_along_axis(proba, top, axis=1)
    weights = weights / weights.sum(axis=1, keepdims=True)
    A = scorer.seen_semantics.embeddings
    return np.einsum("nt,nte->ne", weights, A[top])


def _cosine(U, V) -> np.ndarray:
    """Row-wise cosine matrix; rows of U with zero norm give 0."""
    un = np.linalg.norm(U, axis=1)
    vn = np.linalg.norm(V, axis=1)
    safe = np.where(un > 0, un, 1.0)
    return (U / safe[:, None]) @ (V / vn[:, None]).T


def conse_scores(scorer: ConseScorer, features, semantics: SemanticTable) -> np.ndarray:
    """cos(s(x), a_c) for every class of ``semantics`` (usually the unseen ones).

    Samples whose predicted embedding has zero norm score 0 everywhere and
    trigger a warning naming how many were affected.
    """
    s = predicted_embedding(scorer, features)
    A = normalize_embeddings(semantics).embeddings
    if A.shape[1] != s.shape[1]:
        raise DimensionMismatch(
            f"semantic dimension {A.shape[1]} differs from seen embeddings {s.shape[1]}"
        )
    zero = np.linalg.norm(s, axis=1) == 0
    if np.any(zero):
        warnings.warn(
            f"{int(zero.sum())} samples have a zero predicted embedding; scored 0",
            RuntimeWarning,
            stacklevel=2,
        )
    return np.clip(_cosine(s, A), -1.0, 1.0)


def gattr_embeddings(data: LabeledFeatureSet, classes, shots=None, seed: int = 0) -> SemanticTable:
    """Class embeddings built from visual features (G-attr).

    Each class gets the mean of all its feature vectors, or of ``shots``
    vectors drawn without replacement, scaled to unit norm.
    """
    if shots == "all":
        shots = None
    if shots is not None and int(shots) < 1:
        raise ConfigError("shots must be a positive integer")
    rng = np.random.default_rng(seed)
    classes = [int(c) for c in classes]
    rows = []
    for c in classes:
        idx = data.class_indices(c)
        if idx.size == 0 or (shots is not None and idx.size < shots):
            raise NotEnoughShots(f"class {c} has {idx.size} samples, need {shots or 1}")
        if shots is not None:
            idx = rng.choice(idx, size=int(shots), replace=False)
        rows.append(data.features[idx].mean(axis=0))
    table = SemanticTable(tuple(classes), np.array(rows), kind="g-attr")
    return normalize_embeddings(table)


@dataclass(frozen=True, eq=False)
class PrototypeScorer:
    prototypes: SemanticTable
    similarity: str = "cosine"

    def __post_init__(self):
        if self.similarity not in SIMILARITIES:
            raise ConfigError(f"unknown similarity {self.similarity!r}")
        if self.similarity == "cosine" and np.any(
            np.linalg.norm(self.prototypes.embeddings, axis=1) == 0
        ):
            raise ZeroVectorEmbedding("cosine similarity needs non-zero prototypes")


def prototype_scores(scorer: PrototypeScorer, features) -> np.ndarray:
    P = scorer.prototypes.embeddings
    X = _check_features(features, P.shape[1])
    if scorer.similarity == "cosine":
        return np.clip(_cosine(X, P), -1.0, 1.0)
    if scorer.similarity == "dot":
        return X @ P.T
    sq = (X * X).sum(1)[:, None] + (P * P).sum(1)[None, :] - 2.0 * X @ P.T
    return -np.sqrt(np.maximum(sq, 0.0))


def assemble_joint_scores(seen_block, unseen_block, partition: ClassPartition) -> ScoreMatrix:
    """Concatenate seen and unseen score blocks in the joint order S then U."""
    seen_block = np.asarray(seen_block, dtype=np.float64)
    unseen_block = np.asarray(unseen_block, dtype=np.float64)
    if seen_block.ndim != 2 or unseen_block.ndim != 2:
        raise DimensionMismatch("score blocks must be 2-D")
    if seen_block.shape[0] != unseen_block.shape[0]:
        raise RowCountMismatch(
            f"seen block has {seen_block.shape[0]} rows, unseen block {unseen_block.shape[0]}"
        )
    if partition.n_unseen == 0 or unseen_block.shape[1] == 0:
        raise DataError("generalized zero-shot scoring needs at least one unseen class")
    if seen_block.shape[1] != partition.n_seen or unseen_block.shape[1] != partition.n_unseen:
        raise DimensionMismatch(
            f"blocks have {seen_block.shape[1]}+{unseen_block.shape[1]} columns, partition "
            f"has {partition.n_seen}+{partition.n_unseen} classes"
        )
    return ScoreMatrix(np.hstack([seen_block, unseen_block]), partition)


# Fitted seen/unseen scorer pairs.  Anything with ``seen_scores`` and
# ``unseen_scores`` methods can be plugged into the pipeline and the
# cross-validation code.


@dataclass(frozen=True, eq=False)
class ConseModel:
    """ConSE on both sides: cosine between s(x) and every class embedding."""

    scorer: ConseScorer
    seen_table: SemanticTable
    unseen_table: SemanticTable

    def seen_scores(self, features):
        return conse_scores(self.scorer, features, self.seen_table)

    def unseen_scores(self, features):
        return conse_scores(self.scorer, features, self.unseen_table)


@dataclass(frozen=True, eq=False)
class LinearPrototypeModel:
    """Linear decision values for seen classes, prototype similarity for unseen ones."""

    linear: LinearScorer
    unseen: PrototypeScorer
    semantic_map: object = None

    def seen_scores(self, features):
        return self.linear.decision_function(features)

    def unseen_scores(self, features):
        return prototype_scores(self.unseen, _mapped(self.semantic_map, features))


@dataclass(frozen=True, eq=False)
class PrototypeModel:
    """Prototype similarity for every class of the joint space."""

    seen: PrototypeScorer
    unseen: PrototypeScorer
    semantic_map: object = None

    def seen_scores(self, features):
        return prototype_scores(self.seen, _mapped(self.semantic_map, features))

    def unseen_scores(self, features):
        return prototype_scores(self.unseen, _mapped(self.semantic_map, features))


@dataclass(frozen=True, eq=False)
class ComposedModel:
    """Seen side from one fitted model, unseen side from another."""

    seen_model: object
    unseen_model: object

    def seen_scores(self, features):
        return self.seen_model.seen_scores(features)

    def unseen_scores(self, features):
        return self.unseen_model.unseen_scores(features)


def _mapped(semantic_map, features):
    if semantic_map is None:
        return features
    from .novelty import apply_semantic_map

    return apply_semantic_map(semantic_map, features)


def joint_scores(model, features, partition: ClassPartition) -> ScoreMatrix:
    return assemble_joint_scores(
        model.seen_scores(features), model.unseen_scores(features), partition
    )


def fit_conse_model(train, partition, semantics, regularization=1.0, top_t=10,
                    loss="logistic") -> ConseModel:
    linear = train_linear_seen(train, regularization, classes=partition.seen, loss=loss)
    scorer = ConseScorer(linear, semantics, top_t=min(int(top_t), partition.n_seen))
    return ConseModel(
        scorer,
        normalize_embeddings(semantics.select(partition.seen)),
        normalize_embeddings(semantics.select(partition.unseen)),
    )


def _maybe_map(train, partition, semantics, map_regularization, seed):
    if semantics.dim == train.dim:
        return None
    from .novelty import fit_semantic_map

    return fit_semantic_map(train, semantics, regularization=map_regularization, seed=seed)


def fit_prototype_model(train, partition, semantics, similarity="cosine",
                        map_regularization=1.0, seed=0) -> PrototypeModel:
    """Prototype scoring; semantics in a different space than the features
    are reached through a ridge map fitted on the seen training data."""
    semantic_map = _maybe_map(train, partition, semantics, map_regularization, seed)
    return PrototypeModel(
        PrototypeScorer(semantics.select(partition.seen), similarity),
        PrototypeScorer(semantics.select(partition.unseen), similarity),
        semantic_map,
    )


def fit_linear_prototype_model(train, partition, semantics, regularization=1.0,
                               similarity="cosine", loss="logistic",
                               map_regularization=1.0, seed=0) -> LinearPrototypeModel:
    linear = train_linear_seen(train, regularization, classes=partition.seen, loss=loss)
    semantic_map = _maybe_map(train, partition, semantics, map_regularization, seed)
    return LinearPrototypeModel(
        linear, PrototypeScorer(semantics.select(partition.unseen), similarity), semantic_map
    )
