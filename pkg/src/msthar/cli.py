"""Command-line surface for the training pipeline.

Subcommands: ``synth`` (generate data), ``transform`` (materialize
transformed tensors), ``augment`` (balanced augmented CSV),
``train-individual``, ``train-two-stage``, ``train-sequential``,
``evaluate`` (apply a saved model), ``report`` (aggregate runs, compare
schemes).  Configuration comes from a JSON file (see
``pipeline.DEFAULT_CONFIG``) with a handful of flag overrides.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from . import pipeline
from .augment import AugmentationConfig, balance_dataset
from .data import DataFormatError, DatasetManifest, write_canonical_csv
from .pipeline import ConfigError
from .tensor import FiniteError, ShapeError
from .training import DivergenceError
from .transforms import transform_window

__all__ = ["run_cli", "main"]


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override training and dataset seed")
    parser.add_argument("--dataset", help="dataset kind override (synthetic|uci|csv)")
    parser.add_argument("--transforms", help="comma-separated transform kinds")
    parser.add_argument("--folds", type=int, help="number of cross-validation folds")
    parser.add_argument("--jobs", type=int, help="fold-level parallel workers")
    parser.add_argument("--out", help="output directory")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="msthar",
        description="Multi-stage training over transformed sensor-window representations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("synth", "generate the synthetic dataset as canonical CSV + manifest"),
        ("transform", "materialize transformed tensors as .npz files"),
        ("augment", "write a class-balanced augmented copy of the dataset"),
        ("train-individual", "train one network per transform, no merging"),
        ("train-two-stage", "individual stage plus one combined merge stage"),
        ("train-sequential", "individual stage plus pairwise merge stages"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("evaluate", help="apply a saved model file to a dataset")
    _add_common(p)
    p.add_argument("--model", required=True, help="saved .msth model file")
    p.add_argument("--scheme", default="evaluate", help="scheme label for metrics rows")

    p = sub.add_parser("report", help="aggregate one or two run directories")
    p.add_argument("runs", nargs="+", help="run output directories")
    p.add_argument("--out", help="output directory for the merged report")
    p.add_argument("--scheme", help="only report rows for this scheme")
    return parser


def _resolve(args) -> dict:
    """Config file plus flag overrides; a resolved config is itself a
    valid user config, so it can be re-validated after edits."""
    cfg = pipeline.load_config_file(args.config) if args.config else pipeline.resolve_config()
    if getattr(args, "seed", None) is not None:
        cfg["training"]["seed"] = args.seed
        cfg["dataset"]["seed"] = args.seed
    if getattr(args, "dataset", None):
        cfg["dataset"]["kind"] = args.dataset
    if getattr(args, "transforms", None):
        cfg["transforms"] = [k.strip() for k in args.transforms.split(",") if k.strip()]
    if getattr(args, "folds", None) is not None:
        cfg["folds"] = args.folds
    if getattr(args, "jobs", None) is not None:
        cfg["jobs"] = args.jobs
    return pipeline.resolve_config(cfg)


def _require_out(args) -> Path:
    if not args.out:
        raise ConfigError("--out is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_synth(args) -> int:
    cfg = _resolve(args)
    out = _require_out(args)
    windows, class_names, name = pipeline.build_windows(cfg)
    channels = [f"ch{c}" for c in range(windows[0].n_channels)]
    manifest = DatasetManifest(
        name=name, class_names=class_names, channel_names=channels,
        sampling_rate_hz=windows[0].sampling_rate_hz, window_length=windows[0].length,
    )
    write_canonical_csv(out / "synth.csv", windows, manifest)
    manifest.to_json(out / "manifest.json")
    counts = {}
    for w in windows:
        counts[class_names[w.label]] = counts.get(class_names[w.label], 0) + 1
    print(f"wrote {len(windows)} windows to {out / 'synth.csv'}")
    for cls in class_names:
        print(f"  {cls}: {counts.get(cls, 0)}")
    return 0


def _cmd_transform(args) -> int:
    cfg = _resolve(args)
    out = _require_out(args)
    windows, class_names, name = pipeline.build_windows(cfg)
    tcfgs = pipeline._transform_cfgs(cfg)
    labels = np.array([w.label for w in windows], dtype=np.int64)
    ids = np.array([w.window_id for w in windows], dtype=np.int64)
    for kind in cfg["transforms"]:
        tensors = np.stack([transform_window(w, kind, tcfgs[kind]).tensor for w in windows])
        np.savez_compressed(out / f"{name}-{kind}.npz",
                            tensors=tensors, labels=labels, window_ids=ids)
        print(f"{kind}: {tensors.shape} -> {out / f'{name}-{kind}.npz'}")
    return 0


def _cmd_augment(args) -> int:
    cfg = _resolve(args)
    out = _require_out(args)
    windows, class_names, name = pipeline.build_windows(cfg)
    aug = cfg["augmentation"]
    aug_cfg = AugmentationConfig(
        jitter_std=aug["jitter_std"], scale_std=aug["scale_std"],
        n_segments=aug["n_segments"], magwarp_std=aug["magwarp_std"],
        magwarp_knots=aug["magwarp_knots"], timewarp_std=aug["timewarp_std"],
        timewarp_knots=aug["timewarp_knots"], seed=cfg["training"]["seed"],
    )
    target = None
    if aug["extra_factor"] > 0:
        counts = {}
        for w in windows:
            counts[w.label] = counts.get(w.label, 0) + 1
        target = int(np.ceil(max(counts.values()) * (1.0 + aug["extra_factor"])))
    balanced = balance_dataset(windows, aug_cfg, target_per_class=target)
    channels = [f"ch{c}" for c in range(windows[0].n_channels)]
    manifest = DatasetManifest(
        name=f"{name}-augmented", class_names=class_names, channel_names=channels,
        sampling_rate_hz=windows[0].sampling_rate_hz, window_length=windows[0].length,
    )
    write_canonical_csv(out / "augmented.csv", balanced, manifest)
    manifest.to_json(out / "manifest.json")
    added = len(balanced) - len(windows)
    print(f"wrote {len(balanced)} windows ({added} augmented) to {out / 'augmented.csv'}")
    return 0


def _cmd_train(args, scheme: str) -> int:
    cfg = _resolve(args)
    out = _require_out(args)
    result = pipeline.run_scheme(cfg, scheme, out_dir=out)
    if result.fold_metrics:
        agg = metrics_mod.aggregate_folds(result.fold_metrics)
        print(f"{scheme} on {result.dataset} ({len(result.fold_metrics)} folds):")
        for metric, (mu, sd) in agg.items():
            print(f"  {metric}: {metrics_mod.format_mean_std(mu, sd)}")
    for stage, iou in result.stage_series:
        print(f"  stage {stage}: mean val IoU {iou:.4f}")
    print(f"artifacts in {out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _resolve(args)
    out = _require_out(args)
    fm, class_names = pipeline.evaluate_model_file(
        args.model, cfg, out_dir=out, scheme_label=args.scheme
    )
    print(f"accuracy {fm.accuracy:.4f}, macro IoU {fm.macro_iou:.4f}")
    print(f"metrics in {out / 'metrics.csv'}")
    return 0


def _cmd_report(args) -> int:
    rows = []
    series = []
    for run_dir in args.runs:
        run = Path(run_dir)
        metrics_path = run / "metrics.csv"
        if not metrics_path.is_file():
            raise ConfigError(f"{run_dir}: no metrics.csv found")
        rows.extend(metrics_mod.read_metrics_csv(metrics_path))
        stages_path = run / "stages.csv"
        if stages_path.is_file():
            series.append((run_dir, metrics_mod.read_stages_csv(stages_path)))

    if args.scheme:
        rows = [r for r in rows if r["scheme"] == args.scheme]

    by_scheme = {}
    for row in rows:
        by_scheme.setdefault(row["scheme"], {}).setdefault(row["fold"], row["accuracy"])
    print("per-scheme cross-fold accuracy:")
    for scheme in sorted(by_scheme):
        accs = [by_scheme[scheme][f] for f in sorted(by_scheme[scheme])]
        mu, sd = float(np.mean(accs)), float(np.std(accs))
        print(f"  {scheme}: {metrics_mod.format_mean_std(mu, sd)} over {len(accs)} folds")

    trained = [s for s in sorted(by_scheme) if not s.startswith("individual-")]
    if len(trained) == 2:
        a = [by_scheme[trained[0]][f] for f in sorted(by_scheme[trained[0]])]
        b = [by_scheme[trained[1]][f] for f in sorted(by_scheme[trained[1]])]
        res = metrics_mod.wilcoxon_rank_sum(a, b)
        print(
            f"rank-sum {trained[0]} vs {trained[1]}: W={res.statistic:.1f} "
            f"p={res.p_value:.4g} ({res.method}), "
            f"{'significant' if res.significant else 'not significant'} at alpha={res.alpha}"
        )

    for run_dir, stage_series in series:
        rendered = ", ".join(f"stage {s}: {v:.4f}" for s, v in stage_series)
        print(f"stage IoU series [{run_dir}]: {rendered}")

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        metrics_mod.write_metrics_csv(out / "metrics.csv", rows)
        if series:
            metrics_mod.write_stages_csv(out / "stages.csv", series[-1][1])
        print(f"merged report in {out}")
    return 0


def run_cli(argv=None) -> int:
    """Parse arguments and execute one subcommand; returns the exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "transform":
            return _cmd_transform(args)
        if args.command == "augment":
            return _cmd_augment(args)
        if args.command == "train-individual":
            return _cmd_train(args, "individual")
        if args.command == "train-two-stage":
            return _cmd_train(args, "two-stage")
        if args.command == "train-sequential":
            return _cmd_train(args, "sequential")
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "report":
            return _cmd_report(args)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, DataFormatError, DivergenceError, ShapeError,
            FiniteError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
