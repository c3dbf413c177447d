"""Evaluation and calibration toolkit for generalized zero-shot learning."""

__version__ = "0.1.0"

from .combiner import (  # noqa: E402
    CalibrationRule,
    NoveltyRule,
    calibrated_stack,
    calibrated_topk,
    direct_stack,
    novelty_two_stage,
)
from .data import (  # noqa: E402
    ClassPartition,
    LabeledFeatureSet,
    ScoreMatrix,
    SemanticTable,
    normalize_embeddings,
    split_seen_holdout,
    validate_partition,
)
from .metrics import (  # noqa: E402
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
