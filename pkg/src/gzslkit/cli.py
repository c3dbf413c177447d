"""Command line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

import click
import numpy as np

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
from .errors import ConfigError, GzslError, RowCountMismatch
from .metrics import (
    balance_fscore,
    exact_gamma_sweep,
    flat_hit_at_k,
    novelty_sweep,
    per_class_accuracy,
    standard_metrics,
)
from .novelty import fit_novelty_detector
from .pipeline import ExperimentConfig, load_dataset, make_model, run_cv, run_pipeline, stage
from .scorers import ConseModel, LinearPrototypeModel, joint_scores, train_linear_seen
from .synthetic import SyntheticSpec, generate_synthetic


class _State:
    def __init__(self, config_path, seed, out):
        self.config_path = config_path
        self.seed = seed
        self.out = out

    def config(self, required=True) -> ExperimentConfig:
        if self.config_path is None:
            if required:
                raise ConfigError("this command needs --config")
            cfg = ExperimentConfig()
        else:
            cfg = ExperimentConfig.load(self.config_path)
        if self.seed is not None:
            cfg.seed = self.seed
        if self.out is not None:
            cfg.out = self.out
        return cfg

    def out_dir(self, cfg=None) -> Path:
        out = self.out or (cfg.out if cfg is not None else None) or "gzsl-out"
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        return path


def _write_resolved(out: Path, cfg: ExperimentConfig | None, **arguments):
    doc = {"command": click.get_current_context().info_name, "arguments": arguments}
    if cfg is not None:
        doc["config"] = cfg.to_dict()
    gio.save_json(out / "config.resolved.json", doc)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="Experiment config JSON.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.pass_context
def main(ctx, config_path, seed, out):
    """Generalized zero-shot learning evaluation toolkit."""
    ctx.obj = _State(config_path, seed, out)


@main.command()
@click.option("--n-seen", default=10, show_default=True)
@click.option("--n-unseen", default=5, show_default=True)
@click.option("--dim", default=16, show_default=True)
@click.option("--samples-per-class", default=200, show_default=True)
@click.option("--spread", default=0.25, show_default=True)
@click.option("--embedding-noise", default=0.0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["bin", "csv"]), default="bin", show_default=True)
@click.pass_obj
def synth(state, n_seen, n_unseen, dim, samples_per_class, spread, embedding_noise, fmt):
    """Write a seeded synthetic benchmark plus a config that runs it."""
    spec = SyntheticSpec(n_seen, n_unseen, dim, samples_per_class, spread, embedding_noise,
                         seed=state.seed if state.seed is not None else SyntheticSpec.seed)
    ds = generate_synthetic(spec)
    out = state.out_dir()
    ext = "bin" if fmt == "bin" else "csv"
    gio.write_features(out / f"train_features.{ext}", ds.train.features)
    gio.write_labels(out / "train_labels.txt", ds.train.labels)
    gio.write_features(out / f"test_features.{ext}", ds.test.features)
    gio.write_labels(out / "test_labels.txt", ds.test.labels)
    gio.write_partition(out / "partition.json", ds.partition)
    gio.write_semantics(out / "semantics.csv", ds.semantics)
    gio.save_json(out / "synthetic_spec.json", spec.to_dict())
    cfg = ExperimentConfig(
        partition="partition.json",
        train_features=f"train_features.{ext}",
        train_labels="train_labels.txt",
        test_features=f"test_features.{ext}",
        test_labels="test_labels.txt",
        semantics="semantics.csv",
        seed=spec.seed,
    )
    gio.save_json(out / "config.json", cfg.to_dict())
    _write_resolved(out, None, **spec.to_dict(), format=fmt)
    click.echo(f"wrote synthetic benchmark to {out}")


@main.command()
@click.pass_obj
def train(state):
    """Train the seen-class one-vs-rest linear scorer."""
    cfg = state.config()
    data = load_dataset(cfg)
    params = {k: v for k, v in cfg.scorer_params.items() if k in ("regularization", "loss")}
    with stage("train"):
        model = train_linear_seen(data.train, classes=data.partition.seen, **params)
    out = state.out_dir(cfg)
    gio.save_model(out / "model.json", model)
    _write_resolved(out, cfg)
    click.echo(f"wrote {out / 'model.json'}")


def _with_linear(model, linear):
    if isinstance(model, ConseModel):
        scorer = dataclasses.replace(model.scorer, base=linear)
        return dataclasses.replace(model, scorer=scorer)
    if isinstance(model, LinearPrototypeModel):
        return dataclasses.replace(model, linear=linear)
    raise ConfigError("--model only applies to scorers with a linear seen side")


@main.command()
@click.option("--model", "model_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Pre-trained linear scorer JSON to use for the seen side.")
@click.pass_obj
def score(state, model_path):
    """Score the test split over the joint label space."""
    cfg = state.config()
    data = load_dataset(cfg)
    with stage("train"):
        model = make_model(cfg.scorer, data.train, data.partition, data.semantics,
                           cfg.scorer_params, cfg.seed)
        if model_path is not None:
            model = _with_linear(model, gio.load_model(model_path))
    with stage("score"):
        scores = joint_scores(model, data.test.features, data.partition)
    out = state.out_dir(cfg)
    gio.write_scores_csv(out / "scores.csv", scores)
    gio.write_labels(out / "test_labels.txt", data.test.labels)
    gio.write_partition(out / "partition.json", data.partition)
    _write_resolved(out, cfg, model=model_path)
    click.echo(f"wrote {out / 'scores.csv'}")


def _load_scores(scores_path, labels_path, partition_path):
    partition = gio.read_partition(partition_path)
    scores = gio.read_scores_csv(scores_path, partition)
    truth = gio.read_labels(labels_path)
    if truth.shape[0] != scores.n_samples:
        raise RowCountMismatch(f"{labels_path} has {truth.shape[0]} labels for {scores.n_samples} rows")
    return scores, truth


_score_inputs = [
    click.option("--scores", "scores_path", type=click.Path(exists=True, dir_okay=False), required=True),
    click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False), required=True),
    click.option("--partition", "partition_path", type=click.Path(exists=True, dir_okay=False), required=True),
    click.option("--novelty", "novelty_path", type=click.Path(exists=True, dir_okay=False), default=None,
                 help="Novelty CSV; switches to the two-stage rule."),
]


def _score_options(func):
    for option in reversed(_score_inputs):
        func = option(func)
    return func


@main.command(name="eval")
@_score_options
@click.option("--combiner", type=click.Choice(["direct", "calibrated"]), default="calibrated",
              show_default=True)
@click.option("--gamma", type=float, default=0.0, show_default=True)
@click.option("--tie-break", type=click.Choice(["prefer-unseen", "prefer-seen", "lowest-index"]),
              default="prefer-unseen", show_default=True)
@click.option("-k", "--hit-k", "hit_k", type=int, multiple=True, default=(1,), show_default=True)
@click.pass_obj
def evaluate(state, scores_path, labels_path, partition_path, novelty_path, combiner, gamma,
             tie_break, hit_k):
    """Predictions and accuracies at one operating point."""
    scores, truth = _load_scores(scores_path, labels_path, partition_path)
    novelty = gio.read_novelty_csv(novelty_path) if novelty_path else None
    with stage("combine"):
        if novelty is not None:
            predictions = novelty_two_stage(scores, novelty, NoveltyRule(-gamma))
        elif combiner == "direct":
            predictions = direct_stack(scores)
        else:
            predictions = calibrated_stack(scores, CalibrationRule(gamma, tie_break))
    with stage("metrics"):
        std = standard_metrics(scores, truth)
        hits = {}
        for k in sorted(set(hit_k)):
            if novelty is not None:
                top = novelty_topk(scores, novelty, NoveltyRule(-gamma), k)
            else:
                rule = CalibrationRule(0.0 if combiner == "direct" else gamma,
                                       "lowest-index" if combiner == "direct" else tie_break)
                top = calibrated_topk(scores, rule, k)
            hits[str(k)] = flat_hit_at_k(top, truth, k)
    seen_rows = scores.partition.seen_mask(truth)
    report = {
        "combiner": "novelty" if novelty is not None else combiner,
        "gamma": gamma,
        "tie_break": tie_break,
        "acc_seen_T": per_class_accuracy(predictions, truth, np.unique(truth[seen_rows])),
        "acc_unseen_T": per_class_accuracy(predictions, truth, np.unique(truth[~seen_rows])),
        "standard_metrics": std.as_dict(),
        "hit_at_k": hits,
    }
    out = state.out_dir()
    gio.write_predictions_csv(out / "predictions.csv", predictions)
    gio.save_json(out / "metrics.json", report)
    _write_resolved(out, None, scores=scores_path, labels=labels_path, partition=partition_path,
                    novelty=novelty_path, combiner=combiner, gamma=gamma, tie_break=tie_break,
                    hit_k=list(hit_k))
    click.echo(gio.dumps_stable(report), nl=False)


@main.command()
@_score_options
@click.pass_obj
def sweep(state, scores_path, labels_path, partition_path, novelty_path):
    """Exact Seen-Unseen accuracy Curve and its area."""
    scores, truth = _load_scores(scores_path, labels_path, partition_path)
    with stage("metrics"):
        if novelty_path:
            curve = novelty_sweep(scores, truth, gio.read_novelty_csv(novelty_path))
        else:
            curve = exact_gamma_sweep(scores, truth)
        gamma, fscore = balance_fscore(curve)
    p = curve.direct_stacking_point
    summary = {
        "ausuc": curve.ausuc,
        "n_breakpoints": curve.n_breakpoints,
        "direct_stacking_point": {"gamma": p.gamma, "acc_seen_T": p.acc_seen_to_joint,
                                  "acc_unseen_T": p.acc_unseen_to_joint},
        "balance_point": {"gamma": gamma, "fscore": fscore},
    }
    out = state.out_dir()
    gio.write_curve_csv(out / "curve.csv", curve)
    gio.save_json(out / "summary.json", summary)
    _write_resolved(out, None, scores=scores_path, labels=labels_path, partition=partition_path,
                    novelty=novelty_path)
    click.echo(f"AUSUC {curve.ausuc:.6f} over {curve.n_breakpoints} breakpoints")


@main.command()
@click.pass_obj
def cv(state):
    """Class-wise cross-validation over the config's hyperparameter grid."""
    cfg = state.config()
    report = run_cv(cfg)
    out = state.out_dir(cfg)
    gio.save_json(out / "cv_report.json", report)
    _write_resolved(out, cfg)
    click.echo(f"selected {report['selected']} (mean AUSUC "
               f"{report['mean_ausuc'][report['selected_index']]:.6f})")


@main.command()
@click.option("--kind", type=click.Choice(["gaussian", "loop"]), default="gaussian", show_default=True)
@click.pass_obj
def novelty(state, kind):
    """Fit a novelty detector on the seen training data and score the test split."""
    cfg = state.config()
    data = load_dataset(cfg)
    with stage("novelty"):
        detector = fit_novelty_detector(data.train, data.semantics, kind, seed=cfg.seed,
                                        **cfg.novelty_params)
        values = detector.score(data.test.features)
    out = state.out_dir(cfg)
    gio.write_novelty_csv(out / "novelty.csv", values)
    gio.save_model(out / "semantic_map.json", detector.semantic_map)
    gio.save_model(out / f"novelty_{kind}.json", detector.model)
    gio.write_labels(out / "test_labels.txt", data.test.labels)
    _write_resolved(out, cfg, kind=kind)
    click.echo(f"wrote {out / 'novelty.csv'}")


@main.command()
@click.pass_obj
def run(state):
    """Full pipeline: train, score, combine, sweep and summarize."""
    cfg = state.config()
    out = state.out_dir(cfg)
    result = run_pipeline(cfg, out)
    click.echo(f"AUSUC {result.summary['ausuc']:.6f}; artifacts in {out}")


def cli(argv=None):
    """Console entry point mapping toolkit errors onto exit codes."""
    try:
        main.main(args=argv, prog_name="gzslkit", standalone_mode=False)
    except GzslError as exc:
        where = getattr(exc, "stage", None)
        click.echo(f"error{f' [{where}]' if where else ''}: {exc}", err=True)
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(3)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        click.echo(f"error: numerical failure: {exc}", err=True)
        sys.exit(4)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    except click.exceptions.Abort:
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    cli()
