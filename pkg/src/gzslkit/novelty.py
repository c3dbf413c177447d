"""Novelty scores for the two-stage seen/unseen gate.

Features are first mapped into the semantic space by a regression fitted on
seen-class training data.  Novelty is then measured there, either as the
negative log density under an isotropic Gaussian mixture centred on the seen
class embeddings, or with Local Outlier Probabilities (LoOP) against the
mapped training points.  ``implicit_novelty`` is the score-difference novelty
under which the two-stage rule reduces to calibrated stacking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.special import erf, logsumexp

from .data import LabeledFeatureSet, ScoreMatrix, SemanticTable, normalize_embeddings
from .errors import ConfigError, DataError, DegenerateReference, DimensionMismatch

MAP_FORMS = ("linear-ridge", "one-hidden-layer")
VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class SemanticMap:
    """Regression from D-dim features to E-dim semantic vectors.

    ``params`` holds ``L`` (E x D) and ``c`` (E,) for the linear part; the
    one-hidden-layer form adds ``W1`` (H x D), ``b1`` (H,) and ``W2`` (E x H)
    so that ``out = L x + c + W2 tanh(W1 x + b1)``.
    """

    form: str
    params: dict
    training_meta: dict = field(default_factory=dict)

    @property
    def in_dim(self) -> int:
        return self.params["L"].shape[1]

    @property
    def out_dim(self) -> int:
        return self.params["L"].shape[0]

    def to_dict(self) -> dict:
        return {
            "format": "gzslkit.semantic-map",
            "version": 1,
            "form": self.form,
            "params": {k: np.asarray(v).tolist() for k, v in self.params.items()},
            "training_meta": dict(self.training_meta),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != "gzslkit.semantic-map":
            raise DataError("not a semantic map document")
        params = {k: np.array(v, dtype=np.float64) for k, v in doc["params"].items()}
        for key in ("L", "W1", "W2"):
            if key in params and params[key].ndim == 1:
                params[key] = params[key].reshape(-1, 1)
        return cls(doc["form"], params, doc.get("training_meta", {}))


def apply_semantic_map(semantic_map: SemanticMap, features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != semantic_map.in_dim:
        raise DimensionMismatch(
            f"semantic map expects {semantic_map.in_dim} features, got shape {X.shape}"
        )
    p = semantic_map.params
    out = X @ p["L"].T + p["c"]
    if semantic_map.form == "one-hidden-layer":
        out = out + np.tanh(X @ p["W1"].T + p["b1"]) @ p["W2"].T
    return out


def _ridge(X, A, reg):
    """Minimize mean((X L^T + c - A)^2) + reg (|L|^2 + |c|^2) in closed form."""
    n, d = X.shape
    e = A.shape[1]
    Xa = np.hstack([X, np.ones((n, 1))])
    gram = Xa.T @ Xa + n * e * reg * np.eye(d + 1)
    coef = np.linalg.solve(gram, Xa.T @ A)
    return coef[:d].T.copy(), coef[d].copy()


def _mlp_objective(theta, shapes, X, A, reg):
    n, e = A.shape
    parts, offset = {}, 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        parts[name] = theta[offset : offset + size].reshape(shape)
        offset += size
    L, c, W1, b1, W2 = (parts[k] for k in ("L", "c", "W1", "b1", "W2"))
    H = np.tanh(X @ W1.T + b1)
    R = X @ L.T + c + H @ W2.T - A
    value = np.sum(R * R) / (n * e) + reg * sum(np.sum(v * v) for v in parts.values())
    G = 2.0 * R / (n * e)
    dH = (G @ W2) * (1.0 - H * H)
    grads = {
        "L": G.T @ X,
        "c": G.sum(0),
        "W1": dH.T @ X,
        "b1": dH.sum(0),
        "W2": G.T @ H,
    }
    grad = np.concatenate([(grads[k] + 2.0 * reg * parts[k]).ravel() for k, _ in shapes])
    return value, grad


def fit_semantic_map(
    train: LabeledFeatureSet,
    semantics: SemanticTable,
    form: str = "linear-ridge",
    regularization: float = 1e-3,
    seed: int = 0,
    hidden: int = 32,
    max_iter: int = 3000,
) -> SemanticMap:
    """Regress every training feature onto its class embedding.

    The objective is the mean squared error over samples and embedding
    coordinates plus ``regularization`` times the squared norm of all
    parameters.  The hidden-layer form starts from the ridge solution with a
    zero output layer, so its objective never exceeds the ridge objective by
    more than the initial penalty on the (small, seeded) input weights.
    """
    if form not in MAP_FORMS:
        raise ConfigError(f"unknown semantic map form {form!r}")
    if regularization < 0:
        raise ConfigError("regularization must be non-negative")
    if semantics.kind != "binary-attribute":
        semantics = normalize_embeddings(semantics)
    X = train.features
    A = semantics.rows(train.labels)
    L, c = _ridge(X, A, regularization)
    params = {"L": L, "c": c}
    if form == "one-hidden-layer":
        rng = np.random.default_rng(seed)
        d, e = X.shape[1], A.shape[1]
        init = {
            "L": L,
            "c": c,
            "W1": rng.normal(scale=1.0 / np.sqrt(d), size=(hidden, d)),
            "b1": np.zeros(hidden),
            "W2": np.zeros((e, hidden)),
        }
        shapes = [(k, init[k].shape) for k in ("L", "c", "W1", "b1", "W2")]
        theta0 = np.concatenate([init[k].ravel() for k, _ in shapes])
        result = minimize(
            _mlp_objective,
            theta0,
            args=(shapes, X, A, regularization),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": max_iter, "gtol": 1e-9, "ftol": 1e-15},
        )
        params, offset = {}, 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            params[name] = result.x[offset : offset + size].reshape(shape).copy()
            offset += size
    residual = apply_semantic_map(SemanticMap(form, params), X) - A
    meta = {
        "regularization": float(regularization),
        "seed": int(seed),
        "mse": float(np.mean(residual * residual)),
        "classes": sorted(int(c) for c in np.unique(train.labels)),
    }
    return SemanticMap(form, params, meta)


@dataclass(frozen=True, eq=False)
class GaussianNoveltyModel:
    """Isotropic Gaussian per seen class, centred on its semantic embedding."""

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    class_ids: tuple = ()

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64)
        variances = np.array(self.variances, dtype=np.float64).reshape(-1)
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        if means.ndim != 2 or variances.shape != (means.shape[0],) or weights.shape != variances.shape:
            raise DimensionMismatch("Gaussian mixture parameter shapes disagree")
        if np.any(variances <= 0):
            raise DataError("mixture variances must be positive")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise DataError("mixture weights must form a probability vector")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "class_ids", tuple(int(c) for c in self.class_ids))

    def to_dict(self):
        return {
            "format": "gzslkit.gaussian-novelty",
            "version": 1,
            "class_ids": list(self.class_ids),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != "gzslkit.gaussian-novelty":
            raise DataError("not a Gaussian novelty document")
        return cls(doc["means"], doc["variances"], doc["weights"], doc.get("class_ids", ()))


def fit_gaussian_novelty(mapped, labels, semantics: SemanticTable, classes=None) -> GaussianNoveltyModel:
    """One component per seen class with uniform weights.

    The variance is the mean over the class's mapped points and over the
    embedding coordinates of the squared deviation from the class embedding,
    floored at 1e-8.
    """
    mapped = np.asarray(mapped, dtype=np.float64)
    labels = np.asarray(labels)
    if classes is None:
        classes = np.unique(labels)
    classes = [int(c) for c in classes]
    means = semantics.rows(classes)
    if means.shape[1] != mapped.shape[1]:
        raise DimensionMismatch(
            f"mapped points have {mapped.shape[1]} dims, embeddings {means.shape[1]}"
        )
    variances = []
    for c, mu in zip(classes, means):
        pts = mapped[labels == c]
        if pts.shape[0] == 0:
            raise DataError(f"class {c} has no mapped training point")
        variances.append(max(float(np.mean((pts - mu) ** 2)), VARIANCE_FLOOR))
    weights = np.full(len(classes), 1.0 / len(classes))
    return GaussianNoveltyModel(means, np.array(variances), weights, tuple(classes))


def gaussian_novelty(model: GaussianNoveltyModel, mapped) -> np.ndarray:
    """-log sum_s w_s N(x; mean_s, var_s I), via log-sum-exp."""
    mapped = np.asarray(mapped, dtype=np.float64)
    if mapped.ndim != 2 or mapped.shape[1] != model.means.shape[1]:
        raise DimensionMismatch(
            f"expected {model.means.shape[1]}-dim points, got shape {mapped.shape}"
        )
    e = mapped.shape[1]
    sq = cdist(mapped, model.means, "sqeuclidean")
    log_density = -0.5 * e * np.log(2.0 * np.pi * model.variances) - sq / (2.0 * model.variances)
    with np.errstate(divide="ignore"):
        log_w = np.log(model.weights)
    return -logsumexp(log_density + log_w, axis=1)


@dataclass(frozen=True, eq=False)
class LoopNoveltyModel:
    """Reference set X_S with its precomputed probabilistic distances and Z."""

    reference_points: np.ndarray
    k: int
    lam: float
    reference_pdist: np.ndarray
    normalization: float

    def to_dict(self):
        return {
            "format": "gzslkit.loop-novelty",
            "version": 1,
            "k": int(self.k),
            "lambda": float(self.lam),
            "normalization": float(self.normalization),
            "reference_points": self.reference_points.tolist(),
            "reference_pdist": self.reference_pdist.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != "gzslkit.loop-novelty":
            raise DataError("not a LoOP novelty document")
        return cls(
            np.array(doc["reference_points"], dtype=np.float64),
            int(doc["k"]),
            float(doc["lambda"]),
            np.array(doc["reference_pdist"], dtype=np.float64),
            float(doc["normalization"]),
        )


def _neighbors(queries, reference, k, self_index=None, chunk=512):
    """k nearest reference points per query, ordered by (distance, index).

    One reference point is excluded per query: the query itself when
    ``self_index`` is given, otherwise the first exact duplicate if any.
    """
    n_q = queries.shape[0]
    idx_out = np.empty((n_q, k), dtype=np.int64)
    dist_out = np.empty((n_q, k))
    for start in range(0, n_q, chunk):
        stop = min(start + chunk, n_q)
        D = cdist(queries[start:stop], reference)
        order = np.argsort(D, axis=1, kind="stable")[:, : k + 1]
        dist = np.take_along_axis(D, order, axis=1)
        for row in range(stop - start):
            if self_index is not None:
                hits = np.flatnonzero(order[row] == self_index[start + row])
                drop = hits[0] if hits.size else k
            else:
                drop = 0 if dist[row, 0] == 0.0 else k
            keep = np.delete(np.arange(k + 1), drop)
            idx_out[start + row] = order[row, keep]
            dist_out[start + row] = dist[row, keep]
    return idx_out, dist_out


def _lof(pdist, neighbor_pdist):
    expected = neighbor_pdist.mean(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        lof = pdist / expected - 1.0
    # 0/0 means the point sits in a cluster of coincident points
    return np.where((expected == 0) & (pdist == 0), 0.0, lof)


def fit_loop_novelty(reference_points, k: int = 20, lam: float = 3.0) -> LoopNoveltyModel:
    ref = np.asarray(reference_points, dtype=np.float64)
    if ref.ndim != 2 or ref.shape[0] < 2:
        raise DataError("LoOP needs at least two reference points")
    if lam <= 0:
        raise ConfigError("lambda must be positive")
    k = max(1, min(int(k), ref.shape[0] - 1))
    nbr, dist = _neighbors(ref, ref, k, self_index=np.arange(ref.shape[0]))
    pdist = lam * np.sqrt(np.mean(dist**2, axis=1))
    lof = _lof(pdist, pdist[nbr])
    z = lam * np.sqrt(np.mean(lof**2))
    if not np.isfinite(z) or z == 0.0:
        raise DegenerateReference(f"LoOP normalization is {z}; reference set is degenerate")
    return LoopNoveltyModel(ref, k, float(lam), pdist, float(z))


def loop_novelty(model: LoopNoveltyModel, mapped) -> np.ndarray:
    """Local outlier probability of each query, in [0, 1]."""
    Q = np.asarray(mapped, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[1] != model.reference_points.shape[1]:
        raise DimensionMismatch(
            f"expected {model.reference_points.shape[1]}-dim points, got shape {Q.shape}"
        )
    nbr, dist = _neighbors(Q, model.reference_points, model.k)
    pdist = model.lam * np.sqrt(np.mean(dist**2, axis=1))
    lof = _lof(pdist, model.reference_pdist[nbr])
    return np.maximum(0.0, erf(lof / model.normalization))


def implicit_novelty(scores: ScoreMatrix) -> np.ndarray:
    """max over unseen scores minus max over seen scores, per row."""
    return scores.unseen_block.max(axis=1) - scores.seen_block.max(axis=1)


@dataclass(frozen=True, eq=False)
class NoveltyDetector:
    """A semantic map followed by a Gaussian or LoOP novelty model."""

    semantic_map: SemanticMap
    model: object

    def score(self, features) -> np.ndarray:
        mapped = apply_semantic_map(self.semantic_map, features)
        if isinstance(self.model, LoopNoveltyModel):
            return loop_novelty(self.model, mapped)
        return gaussian_novelty(self.model, mapped)


def fit_novelty_detector(train: LabeledFeatureSet, semantics: SemanticTable, kind="gaussian",
                         form="linear-ridge", regularization=1e-3, k=20, lam=3.0,
                         seed=0) -> NoveltyDetector:
    """Fit the map on seen training data, then the chosen novelty model on its image."""
    if kind not in ("gaussian", "loop"):
        raise ConfigError(f"unknown novelty detector {kind!r}")
    semantic_map = fit_semantic_map(train, semantics, form, regularization, seed)
    mapped = apply_semantic_map(semantic_map, train.features)
    if kind == "gaussian":
        table = semantics if semantics.kind == "binary-attribute" else normalize_embeddings(semantics)
        model = fit_gaussian_novelty(mapped, train.labels, table)
    else:
        model = fit_loop_novelty(mapped, k=k, lam=lam)
    return NoveltyDetector(semantic_map, model)
