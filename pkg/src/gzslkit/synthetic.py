"""Seeded Gaussian-cluster benchmark standing in for real GZSL datasets.

Class means are uniform on the unit sphere and samples are isotropic Gaussian
around them.  The semantic table is the set of true means, optionally
perturbed, so ``embedding_noise=0`` gives the ideal G-attr embedding.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import (
    ClassPartition,
    LabeledFeatureSet,
    SemanticTable,
    normalize_embeddings,
    split_seen_holdout,
)
from .errors import ConfigError

BENCH_SEED = 20161003


@dataclass(frozen=True)
class SyntheticSpec:
    n_seen: int = 10
    n_unseen: int = 5
    dim: int = 16
    samples_per_class: int = 200
    cluster_spread: float = 0.25
    embedding_noise: float = 0.0
    seed: int = BENCH_SEED
    holdout_fraction: float = 0.2

    def __post_init__(self):
        if min(self.n_seen, self.n_unseen, self.dim, self.samples_per_class) < 1:
            raise ConfigError("class counts, dimension and samples per class must be >= 1")
        if not self.cluster_spread > 0:
            raise ConfigError("cluster_spread must be positive")
        if self.embedding_noise < 0:
            raise ConfigError("embedding_noise must be non-negative")

    def to_dict(self):
        return asdict(self)


BENCH_SPEC = SyntheticSpec()


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    train: LabeledFeatureSet
    test: LabeledFeatureSet
    partition: ClassPartition
    semantics: SemanticTable
    means: np.ndarray


def perturb_embeddings(table: SemanticTable, noise: float, seed: int) -> SemanticTable:
    """Add isotropic Gaussian noise of scale ``noise`` to every row, then renormalize."""
    rng = np.random.default_rng(seed)
    base = normalize_embeddings(table).embeddings
    noisy = base + noise * rng.standard_normal(base.shape)
    return normalize_embeddings(SemanticTable(table.class_ids, noisy, table.kind))


def generate_synthetic(spec: SyntheticSpec) -> SyntheticDataset:
    # independent streams, so changing embedding_noise leaves the samples untouched
    means_ss, samples_ss, noise_ss, split_ss = np.random.SeedSequence(spec.seed).spawn(4)
    n_classes = spec.n_seen + spec.n_unseen
    means = np.random.default_rng(means_ss).standard_normal((n_classes, spec.dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)

    rng = np.random.default_rng(samples_ss)
    features = np.concatenate([
        means[c] + spec.cluster_spread * rng.standard_normal((spec.samples_per_class, spec.dim))
        for c in range(n_classes)
    ])
    labels = np.repeat(np.arange(n_classes), spec.samples_per_class)
    partition = ClassPartition(tuple(range(spec.n_seen)), tuple(range(spec.n_seen, n_classes)))

    table = SemanticTable(tuple(range(n_classes)), means, kind="continuous-attribute")
    if spec.embedding_noise > 0:
        table = perturb_embeddings(
            table, spec.embedding_noise, int(np.random.default_rng(noise_ss).integers(2**63))
        )
    split_seed = int(np.random.default_rng(split_ss).integers(2**63))
    train, test = split_seen_holdout(
        LabeledFeatureSet(features, labels), partition, spec.holdout_fraction, split_seed
    )
    return SyntheticDataset(train, test, partition, table, means)
