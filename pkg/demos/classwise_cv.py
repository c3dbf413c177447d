"""
Choosing hyperparameters without unseen classes
===============================================

Unseen classes are off limits during model selection, so the seen classes
are dealt into five class-disjoint folds.  Each round hides one fold's
classes from training and treats them as unseen during validation.
"""

from gzslkit import bench
from gzslkit.cv import evaluate_grid, make_fold_plan, select_by_accuracies, select_by_ausuc
from gzslkit.pipeline import scorer_factory

ds = bench.bench_dataset(seed=3)
plan = make_fold_plan(ds.train, n_folds=5, seed=0, classes=ds.partition.seen)
for r in range(plan.n_folds):
    partition, train_idx, val_idx = plan.round_split(r)
    print(f"round {r}: pseudo-unseen {partition.unseen}, {train_idx.size} train / {val_idx.size} val rows")

grid = [{"regularization": reg, "similarity": sim}
        for reg in (1e-3, 1e-1, 10.0) for sim in ("cosine", "dot", "negative-euclidean")]
factory = scorer_factory("linear-prototype", ds.semantics, seed=0)
evaluation = evaluate_grid(plan, grid, factory)

# %%
# One table, two selection rules: the area under the curve, or the two
# within-side accuracies chosen separately.

for params, area in zip(grid, evaluation.mean("ausuc")):
    print(f"{params}  mean AUSUC {area:.4f}")
print("AUSUC pick   ", select_by_ausuc(plan, grid, factory, evaluation).best)
acc = select_by_accuracies(plan, grid, factory, seen_evaluation=evaluation)
print("accuracy pick", acc.seen_params, "/", acc.unseen_params)

print(bench.selection_comparison(ds, grid, factory, seed=0))
