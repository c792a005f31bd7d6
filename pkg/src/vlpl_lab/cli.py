"""Command-line entry point.

Subcommands cover the full workflow: ``synth`` (planted embeddings),
``simulate`` (single-positive masking + validation split),
``pseudolabel``, ``train``, ``eval``, and ``sweep``. Config-driven
commands take ``--config <json>`` plus targeted overrides; every output
lands under the configured output directory. Exit codes: 0 success,
1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import dataset as ds
from . import embedding_store as store
from . import metrics, probe, pseudo_label, sweep as sweep_mod
from .config import ExperimentConfig, load_config, require_file
from .errors import ConfigError, VlplError
from .experiment import ExperimentData, prepare_data, run_training
from .losses import LossVariant

WORKERS_ENV = "VLPL_LAB_SWEEP_WORKERS"


def _sample_ids(n: int) -> list[str]:
    return [f"sample_{i:06d}" for i in range(n)]


def _write_history_csv(path: str, history) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,train_loss,val_map\n")
        for rec in history:
            val = "" if np.isnan(rec.val_map) else repr(rec.val_map)
            fh.write(f"{rec.epoch},{repr(rec.train_loss)},{val}\n")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "out_dir", None):
        cfg = dataclasses.replace(cfg, paths=dataclasses.replace(cfg.paths, output_dir=args.out_dir))
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(
            cfg,
            dataset=dataclasses.replace(cfg.dataset, seed=args.seed),
            train=dataclasses.replace(cfg.train, seed=args.seed),
        )
    pseudo_fields = {}
    if getattr(args, "tau", None) is not None:
        pseudo_fields["tau"] = args.tau
    if getattr(args, "theta", None) is not None:
        pseudo_fields["theta"] = args.theta
    if getattr(args, "delta", None) is not None:
        pseudo_fields["delta_pct"] = args.delta
        pseudo_fields.setdefault("use_negatives", args.delta > 0)
    if getattr(args, "use_negatives", False):
        pseudo_fields["use_negatives"] = True
    if pseudo_fields:
        cfg = dataclasses.replace(cfg, pseudo=dataclasses.replace(cfg.pseudo, **pseudo_fields))
    loss_fields = {}
    if getattr(args, "variant", None) is not None:
        loss_fields["variant"] = LossVariant(args.variant)
    if loss_fields:
        cfg = dataclasses.replace(cfg, loss=dataclasses.replace(cfg.loss, **loss_fields))
    train_fields = {}
    if getattr(args, "epochs", None) is not None:
        train_fields["epochs"] = args.epochs
    if getattr(args, "lr", None) is not None:
        train_fields["lr"] = args.lr
    if train_fields:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, **train_fields))
    return cfg


def _load_experiment_inputs(cfg: ExperimentConfig, need_annotations: bool = True):
    image_path = require_file(cfg.paths.image_embeddings, "image embeddings")
    label_path = require_file(cfg.paths.label_embeddings, "label embeddings")
    images, _ = store.load_embeddings(image_path, kind="image")
    labels, label_manifest = store.load_embeddings(label_path, kind="label")
    names = label_manifest.label_names
    if len(names) != labels.rows:
        names = store.synthetic_label_names(labels.rows)
    ids, truth = None, None
    if cfg.paths.annotations or need_annotations:
        ann_path = require_file(cfg.paths.annotations, "annotations")
        ids, truth = ds.read_annotations_jsonl(ann_path, n_labels=labels.rows)
    return images, labels, names, ids, truth


def _prepare(cfg: ExperimentConfig) -> ExperimentData:
    images, labels, names, ids, truth = _load_experiment_inputs(cfg)
    return prepare_data(
        images,
        labels,
        truth,
        ids,
        val_fraction=cfg.dataset.val_fraction,
        test_fraction=cfg.dataset.test_fraction,
        seed=cfg.dataset.seed,
        label_names=names,
    )


def _out_dir(cfg: ExperimentConfig) -> str:
    os.makedirs(cfg.paths.output_dir, exist_ok=True)
    return cfg.paths.output_dir


def cmd_synth(args) -> int:
    spec = store.SyntheticSpec(
        n_samples=args.samples,
        n_labels=args.labels,
        dim=args.dim,
        avg_positives=args.avg_positives,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    images, labels, truth = store.synthesize(spec)
    image_manifest, label_manifest = store.synthetic_manifests(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    image_path = os.path.join(args.out_dir, "images.emb")
    label_path = os.path.join(args.out_dir, "labels.emb")
    truth_path = os.path.join(args.out_dir, "ground_truth.jsonl")
    store.save_embeddings(images, image_manifest, image_path)
    store.save_embeddings(labels, label_manifest, label_path)
    ann = ds.AnnotationMatrix.from_binary(truth)
    ds.write_annotations_jsonl(truth_path, _sample_ids(spec.n_samples), ann)
    stats = ds.dataset_stats(ann)
    print(f"wrote {image_path} ({images.rows}x{images.dim})")
    print(f"wrote {label_path} ({labels.rows}x{labels.dim})")
    print(f"wrote {truth_path} (avg positives {stats.avg_positives:.3f})")
    return 0


def cmd_simulate(args) -> int:
    ids, full = ds.read_annotations_jsonl(args.annotations, n_labels=args.n_labels)
    split = ds.split_validation(full, args.fraction, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    split_path = os.path.join(args.out_dir, "split.json")
    train_path = os.path.join(args.out_dir, "train_annotations.jsonl")
    val_path = os.path.join(args.out_dir, "val_annotations.jsonl")
    ds.write_split_json(split_path, split, seed=args.seed, fraction=args.fraction)
    ds.write_annotations_jsonl(train_path, [ids[i] for i in split.train_indices], split.train_annotations)
    ds.write_annotations_jsonl(val_path, [ids[i] for i in split.val_indices], split.val_annotations)
    print(f"wrote {split_path} ({len(split.train_indices)} train / {len(split.val_indices)} val)")
    return 0


def cmd_pseudolabel(cfg: ExperimentConfig, args) -> int:
    images, labels, _, ids, truth = _load_experiment_inputs(cfg, need_annotations=False)
    feats = store.normalize(images).data.astype(np.float64)
    label_embs = store.normalize(labels).data.astype(np.float64)
    probs = pseudo_label.similarity_probs_batch(feats, label_embs, cfg.pseudo.tau)
    states = pseudo_label.assign_pseudo_labels_batch(probs, cfg.pseudo)
    if ids is None:
        ids = _sample_ids(images.rows)

    out_dir = _out_dir(cfg)
    dump_path = os.path.join(out_dir, "pseudo_labels.jsonl")
    pseudo_label.write_pseudo_label_dump(dump_path, ids, states, probs if args.with_probs else None)

    n_pp = int((states == ds.LabelState.PSEUDO_POSITIVE).sum())
    n_pn = int((states == ds.LabelState.PSEUDO_NEGATIVE).sum())
    print(f"wrote {dump_path}")
    print(f"pseudo positives: {n_pp}  pseudo negatives: {n_pn}")
    if truth is not None:
        quality = pseudo_label.pseudo_label_quality(ds.AnnotationMatrix(states=states), truth)
        print(
            f"pseudo-positive precision: {quality.positive_precision:.4f}  "
            f"recall: {quality.positive_recall:.4f}  "
            f"negative fn-rate: {quality.negative_false_negative_rate:.4f}"
        )
    return 0


def cmd_train(cfg: ExperimentConfig) -> int:
    data = _prepare(cfg)
    artifacts = run_training(data, cfg.pseudo, cfg.train_config())
    out_dir = _out_dir(cfg)

    best = artifacts.result.best_epoch
    best_val = max(rec.val_map for rec in artifacts.result.history)
    ckpt_path = os.path.join(out_dir, "probe.ckpt")
    probe.save_checkpoint(
        ckpt_path,
        artifacts.result.model,
        meta={"best_epoch": best, "val_map": best_val, "config": cfg.to_dict()},
    )
    _write_history_csv(os.path.join(out_dir, "history.csv"), artifacts.result.history)

    report = artifacts.test_report.to_dict(label_names=data.label_names)
    report["best_epoch"] = best
    report["val_map_x100"] = round(best_val * 100.0, 2)
    if artifacts.quality is not None:
        report["pseudo_quality"] = dataclasses.asdict(artifacts.quality)
    report["config"] = cfg.to_dict()
    _write_json(os.path.join(out_dir, "report.json"), report)

    print(f"best epoch: {best}  val mAP: {best_val * 100.0:.2f}")
    print(f"test mAP: {artifacts.test_report.map * 100.0:.2f}")
    return 0


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    data = _prepare(cfg)
    model, _ = probe.load_checkpoint(args.checkpoint)
    if args.split == "val":
        feats, labels = data.val_features, data.val_labels
    else:
        feats, labels = data.test_features, data.test_labels
    scores = probe.forward(model, feats)
    report = metrics.mean_average_precision(scores, labels)
    out_dir = _out_dir(cfg)
    _write_json(os.path.join(out_dir, "eval_report.json"), report.to_dict(label_names=data.label_names))
    if args.per_class_csv:
        metrics.write_per_class_csv(
            os.path.join(out_dir, "per_class_ap.csv"), report, label_names=data.label_names
        )
    print(f"{args.split} mAP: {report.map * 100.0:.2f}")
    return 0


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    if cfg.sweep is None:
        raise ConfigError("config has no 'sweep' section")
    data = _prepare(cfg)
    sweep_data = sweep_mod.SweepData(
        label_embeddings=data.label_embeddings,
        train_features=data.train_features,
        observed=data.observed,
        train_truth=data.train_truth,
        val_features=data.val_features,
        val_labels=data.val_labels,
        test_features=data.test_features,
        test_labels=data.test_labels,
    )
    spec = sweep_mod.SweepSpec(
        taus=cfg.sweep.taus,
        thetas=cfg.sweep.thetas,
        deltas=cfg.sweep.deltas,
        smoothing=cfg.sweep.smoothing,
        repeats=cfg.sweep.repeats,
        base_loss=cfg.loss,
        base_train=cfg.train_config(),
    )
    workers = args.workers or int(os.environ.get(WORKERS_ENV, "1"))
    out_dir = _out_dir(cfg)
    journal = os.path.join(out_dir, "results.csv")
    outcome = sweep_mod.run_sweep(spec, sweep_data, journal, workers=workers)
    print(
        f"cells: {len(outcome.rows)}  computed: {outcome.n_computed}  "
        f"skipped: {outcome.n_skipped}  failed: {outcome.n_failed}"
    )
    if outcome.n_failed == len(outcome.rows):
        print("every sweep cell failed", file=sys.stderr)
        return 1

    summary = sweep_mod.summarize(outcome.rows)
    _write_json(os.path.join(out_dir, "summary.json"), summary.to_dict())
    for theta, series in sorted(summary.curves.items()):
        plot_path = os.path.join(out_dir, f"plot_theta_{theta}.csv")
        with open(plot_path, "w", encoding="utf-8", newline="") as fh:
            fh.write("tau,median_map\n")
            for tau, med in series:
                fh.write(f"{repr(tau)},{repr(med)}\n")
    best = summary.best_cell
    print(
        f"best cell: tau={best.tau} theta={best.theta} delta={best.delta} "
        f"smoothing={best.smoothing} median val mAP {best.median_val_map:.2f} "
        f"median test mAP {best.median_test_map:.2f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlpl-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate planted synthetic embeddings")
    p.add_argument("--labels", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--avg-positives", type=float, default=2.5)
    p.add_argument("--noise-sigma", type=float, default=0.3)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("simulate", help="single-positive masking and validation split")
    p.add_argument("--annotations", required=True)
    p.add_argument("--n-labels", type=int, required=True)
    p.add_argument("--fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    for name, extra in (
        ("pseudolabel", ("tau", "theta", "delta", "use_negatives", "with_probs")),
        ("train", ("tau", "theta", "variant", "epochs", "lr")),
        ("eval", ("checkpoint", "split")),
        ("sweep", ("workers",)),
    ):
        p = sub.add_parser(name, help=f"run the {name} step")
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", default=None)
        p.add_argument("--dump-config", action="store_true")
        if "tau" in extra:
            p.add_argument("--tau", type=float, default=None)
            p.add_argument("--theta", type=float, default=None)
        if "delta" in extra:
            p.add_argument("--delta", type=float, default=None)
            p.add_argument("--use-negatives", action="store_true")
        if "with_probs" in extra:
            p.add_argument("--with-probs", action="store_true")
        if "variant" in extra:
            p.add_argument("--variant", choices=[v.value for v in LossVariant], default=None)
            p.add_argument("--epochs", type=int, default=None)
            p.add_argument("--lr", type=float, default=None)
        if "checkpoint" in extra:
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--split", choices=("test", "val"), default="test")
            p.add_argument("--per-class-csv", action="store_true")
        if "workers" in extra:
            p.add_argument("--workers", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        cfg = _apply_overrides(load_config(args.config), args)
        if args.dump_config:
            print(cfg.dump_json())
            return 0
        if args.command == "pseudolabel":
            return cmd_pseudolabel(cfg, args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args)
        if args.command == "sweep":
            return cmd_sweep(cfg, args)
        raise AssertionError(f"unhandled command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VlplError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
