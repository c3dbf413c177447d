"""Acceptance checks, one test per criterion.

Each test prints a ``criterion N [PASS|FAIL]`` line; the lines are repeated in
the pytest terminal summary.  Run just this module with::

    pytest tests/test_acceptance.py -v

Expected values come from the brute-force oracles in ``oracles.py`` or from
closed-form facts; thresholds for the trend checks were fixed after one
oracle run on the benchmark and are not tuned per run.
"""

import itertools
import json
import subprocess
import sys
import time

import numpy as np

import oracles
from acceptance_report import report
from gzslkit import bench
from gzslkit import io as gio
from gzslkit.combiner import (
    CalibrationRule,
    NoveltyRule,
    boundary_ties,
    calibrated_stack,
    novelty_two_stage,
)
from gzslkit.cv import make_fold_plan
from gzslkit.data import ClassPartition, LabeledFeatureSet, ScoreMatrix
from gzslkit.metrics import exact_gamma_sweep, novelty_sweep, standard_metrics
from gzslkit.novelty import fit_loop_novelty, implicit_novelty, loop_novelty
from gzslkit.pipeline import scorer_factory
from gzslkit.synthetic import BENCH_SEED


def _partition(n_seen, n_classes):
    return ClassPartition(tuple(range(n_seen)), tuple(range(n_seen, n_classes)))


def _random_matrices(seed, count):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        scores, truth, n_seen = oracles.dyadic_matrix(rng)
        yield ScoreMatrix(scores, _partition(n_seen, scores.shape[1])), truth


# -- 1 ----------------------------------------------------------------------

def test_criterion_1_exact_sweep_matches_dense_grid():
    worst, sweep_time = 0.0, 0.0
    start = time.perf_counter()
    for scores, truth in _random_matrices(101, 50):
        t0 = time.perf_counter()
        value = exact_gamma_sweep(scores, truth).ausuc
        sweep_time += time.perf_counter() - t0
        expected, _, _ = oracles.grid_ausuc(scores.scores, truth, scores.partition.n_seen)
        worst = max(worst, abs(value - expected))
    total = time.perf_counter() - start
    ok = worst <= 1e-9 and total < 30.0
    report(1, "exact sweep vs 1e6-point grid", ok,
           f"max |diff| {worst:.3g} (tol 1e-9), sweep {sweep_time:.2f}s, "
           f"with oracle {total:.1f}s (limit 30s)")
    assert worst <= 1e-9
    assert total < 30.0


# -- 2 ----------------------------------------------------------------------

def test_criterion_2_calibrated_equals_two_stage_on_implicit_novelty():
    rng = np.random.default_rng(202)
    compared = disagreements = excluded = 0
    for m in range(20):
        n, n_seen, n_unseen = int(rng.integers(50, 400)), int(rng.integers(1, 10)), int(rng.integers(1, 10))
        if m % 2:  # coarse lattice, so boundary ties really occur
            values = rng.integers(-8, 9, (n, n_seen + n_unseen)) / 8.0
            gammas = np.linspace(-1.0, 1.0, 11)
        else:
            values = rng.normal(size=(n, n_seen + n_unseen))
            gammas = rng.uniform(-2.0, 2.0, 11)
        scores = ScoreMatrix(values, _partition(n_seen, n_seen + n_unseen))
        novelty = implicit_novelty(scores)
        for gamma in gammas:
            ties = np.zeros(scores.n_samples, dtype=bool)
            ties[boundary_ties(scores, float(gamma))] = True
            a = calibrated_stack(scores, CalibrationRule(float(gamma)))
            b = novelty_two_stage(scores, novelty, NoveltyRule(-float(gamma)))
            compared += int(np.sum(~ties))
            excluded += int(np.sum(ties))
            disagreements += int(np.sum(a[~ties] != b[~ties]))
    ok = disagreements == 0 and excluded > 0
    report(2, "calibrated == two-stage(implicit novelty)", ok,
           f"{compared - disagreements}/{compared} rows agree over 20 matrices x 11 gammas "
           f"({excluded} boundary-tie rows excluded)")
    assert disagreements == 0
    assert excluded > 0


# -- 3 ----------------------------------------------------------------------

def _curve_law_violations(curve, scores, truth):
    problems = []
    if np.any(np.diff(curve.acc_unseen) < 0):
        problems.append("A_U->T decreases")
    if np.any(np.diff(curve.acc_seen) > 0):
        problems.append("A_S->T increases")
    std = standard_metrics(scores, truth)
    if curve.acc_unseen[0] != 0.0:
        problems.append("first point not (., 0)")
    if curve.acc_seen[-1] != 0.0 or curve.acc_unseen[-1] != std.acc_unseen_to_unseen:
        problems.append("last point not (0, A_U->U)")
    if not 0.0 <= curve.ausuc <= 1.0:
        problems.append("AUSUC outside [0, 1]")
    return problems


def test_criterion_3_curve_laws():
    curves, problems = 0, []
    for scores, truth in _random_matrices(303, 50):
        problems += _curve_law_violations(exact_gamma_sweep(scores, truth), scores, truth)
        curves += 1
        novelty = np.random.default_rng(curves).normal(size=scores.n_samples)
        problems += _curve_law_violations(novelty_sweep(scores, truth, novelty), scores, truth)
        curves += 1
    ds = bench.bench_dataset()
    bench_scores = bench.prototype_scores(ds)
    problems += _curve_law_violations(exact_gamma_sweep(bench_scores, ds.test.labels),
                                      bench_scores, ds.test.labels)
    curves += 1

    # oracle scorer: the true class scores 1, every other class 0
    positions = ds.partition.positions(ds.test.labels)
    perfect = np.zeros((ds.test.n_samples, len(ds.partition.joint)))
    perfect[np.arange(ds.test.n_samples), positions] = 1.0
    oracle_ausuc = exact_gamma_sweep(ScoreMatrix(perfect, ds.partition), ds.test.labels).ausuc
    ok = not problems and oracle_ausuc == 1.0
    report(3, "curve laws", ok,
           f"{curves} curves, {len(problems)} violations; oracle scorer AUSUC = {oracle_ausuc!r}")
    assert not problems
    assert oracle_ausuc == 1.0


# -- 4 ----------------------------------------------------------------------

def test_criterion_4_collapse_and_recovery():
    r = bench.collapse_experiment(bench.bench_dataset(), inflation=1.0)
    checks = [
        r["direct_A_U->T"] < 0.1 * r["A_U->U"],
        r["direct_A_S->T"] >= 0.95 * r["A_S->S"],
        r["calibrated_A_U->T"] >= 0.5 * r["A_U->U"],
    ]
    report(4, "collapse under +1 seen inflation", all(checks),
           f"direct A_U->T {r['direct_A_U->T']:.4f} vs 0.1*A_U->U {0.1 * r['A_U->U']:.4f}; "
           f"direct A_S->T {r['direct_A_S->T']:.4f} vs 0.95*A_S->S {0.95 * r['A_S->S']:.4f}; "
           f"calibrated A_U->T {r['calibrated_A_U->T']:.4f} at gamma {r['balance_gamma']:.4f}")
    assert all(checks)


# -- 5 ----------------------------------------------------------------------

def test_criterion_5_loop():
    rng = np.random.default_rng(505)
    reference = rng.normal(size=(300, 4))
    model = fit_loop_novelty(reference, k=20, lam=3.0)
    queries = rng.normal(scale=3.0, size=(10_000, 4))
    values = loop_novelty(model, queries)
    in_range = bool(np.all((values >= 0.0) & (values <= 1.0)))

    worst = 0.0
    for _ in range(20):
        n, dim = int(rng.integers(5, 51)), int(rng.integers(1, 5))
        k = int(rng.integers(1, min(10, n - 1) + 1))
        ref = rng.normal(size=(n, dim))
        q = np.vstack([rng.normal(scale=2.0, size=(15, dim)), ref[rng.choice(n, 3, replace=False)]])
        got = loop_novelty(fit_loop_novelty(ref, k=k, lam=3.0), q)
        expected = oracles.loop_oracle(ref.tolist(), q.tolist(), k, 3.0)
        worst = max(worst, float(np.max(np.abs(got - np.array(expected)))))

    blob = rng.normal(scale=0.1, size=(200, 2))
    centre = blob[np.argmin(np.linalg.norm(blob - blob.mean(axis=0), axis=1))]
    duplicate = loop_novelty(fit_loop_novelty(blob, k=20, lam=3.0), centre[None, :].copy())[0]

    ok = in_range and worst <= 1e-9 and duplicate == 0.0
    report(5, "LoOP", ok,
           f"10^4 queries in [0,1]: {in_range}; oracle max |diff| {worst:.3g} (tol 1e-9); "
           f"dense-cluster duplicate scores {float(duplicate)!r}")
    assert in_range
    assert worst <= 1e-9
    assert duplicate == 0.0


# -- 6 ----------------------------------------------------------------------

def test_criterion_6_gattr_trend():
    pairs = [bench.gattr_vs_noise(seed, noise=0.5) for seed in range(50)]
    wins = sum(clean >= noisy for clean, noisy in pairs)
    shots = bench.few_shot_ausuc(shots=(1, 5, 25, "all"), rounds=100)
    medians = [float(np.median(shots[m])) for m in (1, 5, 25, "all")]
    monotone = all(a <= b for a, b in zip(medians, medians[1:]))
    ok = wins >= 45 and monotone
    report(6, "G-attr trend", ok,
           f"G-attr >= noisy in {wins}/50 seeds (need 45); median AUSUC for m=1,5,25,all: "
           + ", ".join(f"{m:.4f}" for m in medians))
    assert wins >= 45
    assert monotone


# -- 7 ----------------------------------------------------------------------

def test_criterion_7_combiner_ordering():
    r = bench.combiner_comparison(bench.bench_dataset(), seed=BENCH_SEED)
    ok = r["calibrated"] >= r["gaussian"] and r["calibrated"] >= r["loop"]
    report(7, "calibrated vs novelty-gated (trend)", ok,
           f"AUSUC calibrated {r['calibrated']:.4f}, Gaussian {r['gaussian']:.4f}, "
           f"LoOP {r['loop']:.4f}")
    assert ok


# -- 8 ----------------------------------------------------------------------

SELECTION_GRID = [
    {"regularization": r, "similarity": s}
    for r, s in itertools.product([1e-3, 1e-1, 10.0], ["cosine", "dot", "negative-euclidean"])
]


def test_criterion_8_cv_protocol():
    classes = tuple(range(10))
    labels = np.repeat(np.arange(10), 12)
    data = LabeledFeatureSet(np.zeros((labels.size, 1)), labels)
    plan_problems = 0
    for seed in range(100):
        plan = make_fold_plan(data, n_folds=5, seed=seed, classes=classes)
        flat = [c for fold in plan.folds for c in fold]
        if sorted(flat) != list(classes) or len(set(flat)) != len(flat):
            plan_problems += 1
        for held in range(plan.n_folds):
            _, train_idx, val_idx = plan.round_split(held)
            if np.intersect1d(train_idx, val_idx).size:
                plan_problems += 1

    wins = 0
    for seed in range(50):
        ds = bench.bench_dataset(seed)
        factory = scorer_factory("linear-prototype", ds.semantics, {}, seed)
        r = bench.selection_comparison(ds, SELECTION_GRID, factory, seed=seed)
        wins += r["ausuc_selection_test_ausuc"] > r["accuracy_selection_test_ausuc"]
    ok = plan_problems == 0 and wins >= 35
    report(8, "class-wise CV protocol", ok,
           f"100 fold plans, {plan_problems} disjointness/coverage/overlap problems; "
           f"AUSUC selection strictly better on test in {wins}/50 seeds (need 35)")
    assert plan_problems == 0
    assert wins >= 35


# -- 9 ----------------------------------------------------------------------

def test_criterion_9_byte_identical_summary(tmp_path):
    ds = bench.bench_dataset()
    gio.write_features(tmp_path / "train.bin", ds.train.features)
    gio.write_labels(tmp_path / "train_labels.txt", ds.train.labels)
    gio.write_features(tmp_path / "test.bin", ds.test.features)
    gio.write_labels(tmp_path / "test_labels.txt", ds.test.labels)
    gio.write_partition(tmp_path / "partition.json", ds.partition)
    gio.write_semantics(tmp_path / "semantics.csv", ds.semantics)
    outcomes = []
    for combiner in ("calibrated", "novelty-loop"):
        config = {
            "partition": "partition.json",
            "train_features": "train.bin", "train_labels": "train_labels.txt",
            "test_features": "test.bin", "test_labels": "test_labels.txt",
            "semantics": "semantics.csv", "combiner": combiner, "hit_k": [1, 3],
        }
        path = tmp_path / f"{combiner}.json"
        path.write_text(json.dumps(config))
        blobs = []
        for run in ("a", "b"):
            out = tmp_path / f"{combiner}-{run}"
            subprocess.run(
                [sys.executable, "-m", "gzslkit.cli", "--config", str(path), "--out", str(out), "run"],
                check=True, capture_output=True,
            )
            blobs.append((out / "summary.json").read_bytes())
        outcomes.append(blobs[0] == blobs[1])
    ok = all(outcomes)
    report(9, "deterministic summary", ok,
           f"two separate processes per config, byte-identical summary.json: "
           f"calibrated {outcomes[0]}, novelty-loop {outcomes[1]}")
    assert ok
