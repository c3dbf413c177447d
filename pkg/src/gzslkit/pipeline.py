"""End-to-end experiment: load, train, score, combine, evaluate, write artifacts."""

from __future__ import annotations

import contextlib
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io as gio
from .combiner import (
    CalibrationRule,
    NoveltyRule,
    calibrated_stack,
    calibrated_topk,
    direct_stack,
    novelty_topk,
    novelty_two_stage,
)
from .cv import make_fold_plan, select_by_accuracies, select_by_ausuc, evaluate_grid
from .data import (
    LabeledFeatureSet,
    SemanticTable,
    normalize_embeddings,
    split_seen_holdout,
    stratified_holdout,
    validate_partition,
)
from .errors import ConfigError, DataError, GzslError
from .metrics import balance_fscore, exact_gamma_sweep, flat_hit_at_k, novelty_sweep, standard_metrics
from .novelty import fit_novelty_detector
from .scorers import (
    fit_conse_model,
    fit_linear_prototype_model,
    fit_prototype_model,
    gattr_embeddings,
    joint_scores,
)

SCORERS = ("conse", "prototype", "linear-prototype")
COMBINERS = ("direct", "calibrated", "novelty-gaussian", "novelty-loop")
_PATH_FIELDS = ("features", "labels", "train_features", "train_labels",
                "test_features", "test_labels", "partition", "semantics")


@dataclass
class ExperimentConfig:
    """Everything a run needs.  ``semantics`` is a CSV path or the word ``"gattr"``
    (class means of the features; unseen classes use a reserved share of their
    samples that never enters the test set)."""

    partition: str | None = None
    features: str | None = None
    labels: str | None = None
    train_features: str | None = None
    train_labels: str | None = None
    test_features: str | None = None
    test_labels: str | None = None
    semantics: str | None = None
    semantics_kind: str = "continuous-attribute"
    gattr_shots: int | None = None
    gattr_reserve_fraction: float = 0.8
    scorer: str = "prototype"
    scorer_params: dict = field(default_factory=dict)
    combiner: str = "calibrated"
    gamma: float | None = None
    tie_break: str = "prefer-unseen"
    novelty_params: dict = field(default_factory=dict)
    hit_k: list = field(default_factory=lambda: [1])
    holdout_fraction: float = 0.2
    seed: int = 0
    cv: dict = field(default_factory=dict)
    out: str | None = None

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        cfg = cls(**doc)
        if base_dir is not None:
            for name in _PATH_FIELDS:
                value = getattr(cfg, name)
                if value and not (name == "semantics" and value == "gattr"):
                    p = Path(value)
                    if not p.is_absolute():
                        setattr(cfg, name, str(Path(base_dir) / p))
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            doc = gio.load_json(path)
        except ValueError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return cls.from_dict(doc, base_dir=Path(path).parent)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        """Static checks that need no computation; raises ConfigError."""
        if self.scorer not in SCORERS:
            raise ConfigError(f"scorer must be one of {SCORERS}, got {self.scorer!r}")
        if self.combiner not in COMBINERS:
            raise ConfigError(f"combiner must be one of {COMBINERS}, got {self.combiner!r}")
        if not self.partition:
            raise ConfigError("config needs a partition path")
        explicit = self.train_features or self.test_features
        if explicit:
            missing = [n for n in ("train_features", "train_labels", "test_features", "test_labels")
                       if not getattr(self, n)]
            if missing:
                raise ConfigError(f"explicit train/test split is missing {missing}")
        elif not (self.features and self.labels):
            raise ConfigError("config needs features+labels or explicit train/test files")
        if not self.semantics:
            raise ConfigError(f"scorer {self.scorer!r} needs a semantics path (or \"gattr\")")
        for name in _PATH_FIELDS:
            value = getattr(self, name)
            if value and not (name == "semantics" and value == "gattr") and not Path(value).is_file():
                raise ConfigError(f"{name} file not found: {value}")
        if any(int(k) < 1 for k in self.hit_k):
            raise ConfigError("hit@K values must be positive")
        if not 0 < self.holdout_fraction < 1:
            raise ConfigError("holdout_fraction must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class LoadedData:
    train: LabeledFeatureSet
    test: LabeledFeatureSet
    partition: object
    semantics: SemanticTable


@contextlib.contextmanager
def stage(name: str):
    """Tag toolkit errors raised inside the block with the pipeline stage."""
    try:
        yield
    except GzslError as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


def _feature_set(features_path, labels_path) -> LabeledFeatureSet:
    X = gio.read_features(features_path)
    y = gio.read_labels(labels_path)
    if X.shape[0] != y.shape[0]:
        raise DataError(f"{features_path} has {X.shape[0]} rows but {labels_path} has {y.shape[0]} labels")
    return LabeledFeatureSet(X, y)


def load_dataset(config: ExperimentConfig) -> LoadedData:
    """Read and validate every input; the semantic table comes back normalized."""
    config.validate()
    partition = gio.read_partition(config.partition)
    if config.train_features:
        train = _feature_set(config.train_features, config.train_labels)
        test = _feature_set(config.test_features, config.test_labels)
        validate_partition(partition, train)
        validate_partition(partition, test)
        if np.any(~partition.seen_mask(train.labels)):
            raise DataError("training file contains unseen-class samples")
        if train.dim != test.dim:
            raise DataError(f"train has {train.dim} feature columns, test has {test.dim}")
    else:
        data = _feature_set(config.features, config.labels)
        train, test = split_seen_holdout(data, partition, config.holdout_fraction, config.seed)

    if config.semantics == "gattr":
        # reserve part of each unseen class to build its embedding
        rng = np.random.default_rng([config.seed, 1])
        reserve, held = stratified_holdout(
            test.labels, partition.unseen, 1.0 - config.gattr_reserve_fraction, rng
        )
        reserved = test.subset(reserve)
        keep = np.sort(np.concatenate([np.flatnonzero(partition.seen_mask(test.labels)), held]))
        test = test.subset(keep)
        seen_table = gattr_embeddings(train, partition.seen, config.gattr_shots, config.seed)
        unseen_table = gattr_embeddings(reserved, partition.unseen, config.gattr_shots, config.seed)
        semantics = SemanticTable(
            partition.joint,
            np.vstack([seen_table.embeddings, unseen_table.embeddings]),
            kind="g-attr",
        )
    else:
        semantics = normalize_embeddings(gio.read_semantics(config.semantics, config.semantics_kind))
        missing = [c for c in partition.joint if c not in set(semantics.class_ids)]
        if missing:
            raise DataError(f"semantic table lacks classes {missing}")
    return LoadedData(train, test, partition, semantics)


def make_model(scorer: str, train, partition, semantics, params=None, seed: int = 0):
    params = dict(params or {})
    try:
        if scorer == "conse":
            return fit_conse_model(train, partition, semantics, **params)
        if scorer == "prototype":
            return fit_prototype_model(train, partition, semantics, seed=seed, **params)
        if scorer == "linear-prototype":
            return fit_linear_prototype_model(train, partition, semantics, seed=seed, **params)
    except TypeError as exc:
        raise ConfigError(f"bad hyperparameters for scorer {scorer!r}: {exc}") from None
    raise ConfigError(f"unknown scorer {scorer!r}")


def scorer_factory(scorer: str, semantics: SemanticTable, base_params=None, seed: int = 0):
    """A cross-validation factory bound to one scorer family and semantic table."""
    base = dict(base_params or {})

    def factory(params, train, partition):
        return make_model(scorer, train, partition, semantics, {**base, **dict(params)}, seed)

    return factory


def _point(p) -> dict:
    return {"gamma": p.gamma, "acc_seen_T": p.acc_seen_to_joint, "acc_unseen_T": p.acc_unseen_to_joint}


@dataclass
class PipelineResult:
    summary: dict
    curve: object
    scores: object
    predictions: np.ndarray
    novelty: np.ndarray | None = None
    paths: dict = field(default_factory=dict)


def run_pipeline(config: ExperimentConfig, out_dir=None) -> PipelineResult:
    with stage("config"):
        config.validate()
    with stage("load"):
        data = load_dataset(config)
    with stage("train"):
        model = make_model(config.scorer, data.train, data.partition, data.semantics,
                           config.scorer_params, config.seed)
    with stage("score"):
        scores = joint_scores(model, data.test.features, data.partition)
        n_classes = len(data.partition.joint)
        if any(int(k) > n_classes for k in config.hit_k):
            raise ConfigError(f"hit@K values must not exceed |T| = {n_classes}")
    truth = data.test.labels
    novelty = None
    with stage("combine"):
        if config.combiner.startswith("novelty"):
            kind = config.combiner.split("-", 1)[1]
            detector = fit_novelty_detector(data.train, data.semantics, kind,
                                            seed=config.seed, **config.novelty_params)
            novelty = detector.score(data.test.features)
            curve = novelty_sweep(scores, truth, novelty)
        else:
            curve = exact_gamma_sweep(scores, truth)
        balance_gamma, balance_f = balance_fscore(curve)
        if config.combiner == "direct":
            gamma = 0.0
        elif config.gamma is not None:
            gamma = float(config.gamma)
        else:
            gamma = balance_gamma if np.isfinite(balance_gamma) else 0.0
        if novelty is not None:
            rule = NoveltyRule(-gamma)
            predictions = novelty_two_stage(scores, novelty, rule)
        elif config.combiner == "direct":
            predictions = direct_stack(scores)
        else:
            predictions = calibrated_stack(scores, CalibrationRule(gamma, config.tie_break))
    with stage("metrics"):
        std = standard_metrics(scores, truth)
        seen_rows = data.partition.seen_mask(truth)
        hits = {}
        for k in sorted({int(k) for k in config.hit_k}):
            if novelty is not None:
                top = novelty_topk(scores, novelty, NoveltyRule(-gamma), k)
            else:
                tie = "lowest-index" if config.combiner == "direct" else config.tie_break
                top = calibrated_topk(scores, CalibrationRule(gamma, tie), k)
            hits[str(k)] = {
                "all": flat_hit_at_k(top, truth, k),
                "seen": flat_hit_at_k(top[seen_rows], truth[seen_rows], k),
                "unseen": flat_hit_at_k(top[~seen_rows], truth[~seen_rows], k),
            }
    inputs = {name: getattr(config, name) for name in _PATH_FIELDS
              if getattr(config, name) and getattr(config, name) != "gattr"}
    summary = {
        "ausuc": curve.ausuc,
        "n_breakpoints": curve.n_breakpoints,
        "direct_stacking_point": _point(curve.direct_stacking_point),
        "balance_point": {"gamma": balance_gamma, "fscore": balance_f},
        "operating_point": {"combiner": config.combiner, "gamma": gamma, "tie_break": config.tie_break},
        "standard_metrics": std.as_dict(),
        "hit_at_k": hits,
        "curve_monotone": bool(np.all(np.diff(curve.acc_unseen) >= 0)
                               and np.all(np.diff(curve.acc_seen) <= 0)),
        "provenance": {
            "package_version": __version__,
            "seed": config.seed,
            "scorer": config.scorer,
            "scorer_params": dict(config.scorer_params),
            "novelty_params": dict(config.novelty_params),
            "holdout_fraction": config.holdout_fraction,
            "n_train": data.train.n_samples,
            "n_test": data.test.n_samples,
            "input_hashes": {name: gio.content_hash(path) for name, path in sorted(inputs.items())},
        },
    }
    result = PipelineResult(summary, curve, scores, predictions, novelty)
    out_dir = out_dir if out_dir is not None else config.out
    if out_dir is not None:
        with stage("write"):
            result.paths = write_artifacts(result, config, out_dir)
    return result


def write_artifacts(result: PipelineResult, config: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "predictions": out / "predictions.csv",
        "curve": out / "curve.csv",
        "scores": out / "scores.csv",
        "summary": out / "summary.json",
        "config": out / "config.resolved.json",
    }
    gio.write_predictions_csv(paths["predictions"], result.predictions)
    gio.write_curve_csv(paths["curve"], result.curve)
    gio.write_scores_csv(paths["scores"], result.scores)
    gio.save_json(paths["summary"], result.summary)
    gio.save_json(paths["config"], config.to_dict())
    if result.novelty is not None:
        paths["novelty"] = out / "novelty.csv"
        gio.write_novelty_csv(paths["novelty"], result.novelty)
    return {k: str(v) for k, v in paths.items()}


def run_cv(config: ExperimentConfig) -> dict:
    """Class-wise CV over ``config.cv["grid"]``; returns the report document."""
    grid = config.cv.get("grid")
    if not grid:
        raise ConfigError('cv needs a non-empty "grid" list of hyperparameter objects')
    with stage("load"):
        data = load_dataset(config)
    n_folds = int(config.cv.get("n_folds", 5))
    with stage("cv"):
        plan = make_fold_plan(data.train, n_folds=n_folds, seed=config.seed,
                              classes=data.partition.seen)
        factory = scorer_factory(config.scorer, data.semantics, config.scorer_params, config.seed)
        evaluation = evaluate_grid(plan, grid, factory)
        by_ausuc = select_by_ausuc(plan, grid, factory, evaluation)
        by_acc = select_by_accuracies(plan, grid, factory, seen_evaluation=evaluation,
                                      unseen_evaluation=evaluation)
    return {
        "plan_seed": plan.seed,
        "folds": [list(f) for f in plan.folds],
        "candidates": [dict(c) for c in grid],
        "round_ausuc": evaluation.rounds["ausuc"].tolist(),
        "mean_ausuc": evaluation.mean("ausuc").tolist(),
        "round_acc_seen_to_seen": evaluation.rounds["acc_seen_to_seen"].tolist(),
        "round_acc_unseen_to_unseen": evaluation.rounds["acc_unseen_to_unseen"].tolist(),
        "selected": dict(by_ausuc.best),
        "selected_index": by_ausuc.best_index,
        "accuracy_selection": {
            "seen": dict(by_acc.seen_params),
            "unseen": dict(by_acc.unseen_params),
        },
    }
