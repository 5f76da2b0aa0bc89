"""Shared fixtures: the desk-scale end-to-end run used by the acceptance suite."""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

import msthar.pipeline as pipeline
from msthar.data import make_folds
from msthar.metrics import confusion_matrix, per_class_metrics
from msthar.model import (
    ClassifierSpec,
    allocate_widths,
    freeze_base,
    strip_classifier,
    tensor_hashes,
)
from msthar.training import (
    evaluate_proba,
    train_combined,
    train_individual,
    train_sequential,
)

# Desk-scale end-to-end configuration: the dataset dimensions and seed
# are pinned; network sizes and the 2D pre-reduction are sized for a
# single desktop core.
ACCEPTANCE_CONFIG = {
    "dataset": {"classes": 4, "channels": 3, "length": 128,
                "windows_per_class": 150, "seed": 42},
    "transforms": ["identity", "scattering", "gaf", "recurrence"],
    "gaf": {"paa_segments": 48},
    "recurrence": {"paa_segments": 48},
    "scattering": {"wavelets_per_octave": 4},
    "model": {"base_1d": {"filters": [16, 32, 64]},
              "base_2d": {"filters": [8, 16, 32]},
              "classifier_hidden": [64]},
    "widths": {"total": 96, "multiple": 16, "floor": 16},
    "sequential": {"total": 96, "multiple": 16, "floor": 16},
    "training": {"seed": 42, "max_epochs": 100, "batch_size": 32, "patience": 15,
                 "lr": 1e-4},
    "folds": 5,
}


def _macro_iou(probs, labels, n_classes):
    cm = confusion_matrix(probs.argmax(1), labels, n_classes)
    return float(np.mean(per_class_metrics(cm)["iou"]))


@pytest.fixture(scope="session")
def synth_run():
    """One full two-stage plus sequential run on the pinned dataset.

    Trains the four individual networks once (stage 1 is shared by both
    schemes), then the combined merge and the pairwise merges, recording
    test accuracies, per-stage validation IoU, frozen-tensor hashes, and
    wall times.
    """
    cfg = pipeline.resolve_config(ACCEPTANCE_CONFIG)
    started = time.perf_counter()
    windows, class_names, _ = pipeline.build_windows(cfg)
    split = make_folds(windows, k=cfg["folds"], seed=pipeline._seed_for(cfg, "folds"))
    data, audit, _ = pipeline.prepare_fold(windows, split, 0, cfg, len(class_names))
    transform_time = time.perf_counter() - started

    settings = pipeline._train_settings(cfg)
    classifier_spec = ClassifierSpec((64, 4))
    individual = {}
    nets = {}
    for kind in cfg["transforms"]:
        spec = pipeline._base_spec(kind, cfg, data.train[kind].shape[1:])
        net, report = train_individual(
            kind, data, spec, classifier_spec, settings,
            seed=pipeline._seed_for(cfg, f"individual:{kind}", 0),
        )
        test_probs = evaluate_proba(net, data.test[kind])
        val_probs = evaluate_proba(net, data.val[kind])
        individual[kind] = {
            "test_accuracy": float(np.mean(test_probs.argmax(1) == data.y_test)),
            "val_iou": _macro_iou(val_probs, data.y_val, 4),
            "report": report,
        }
        nets[kind] = net

    bases = {k: freeze_base(strip_classifier(n)) for k, n in nets.items()}
    hashes_after_stage1 = {k: tensor_hashes(b) for k, b in bases.items()}

    ious = {k: v["val_iou"] for k, v in individual.items()}
    widths = allocate_widths(ious, total=96, multiple=16, floor=16)
    merged, combined_report, cache = train_combined(
        bases, widths, data, classifier_spec, settings,
        seed=pipeline._seed_for(cfg, "combined", 0),
    )
    test_probs = evaluate_proba(merged, cache["test"], precomputed=True)
    val_probs = evaluate_proba(merged, cache["val"], precomputed=True)
    two_stage_elapsed = time.perf_counter() - started

    order = sorted(cfg["transforms"], key=lambda k: (-ious[k], k))
    pairs = []
    for i in range(1, len(order)):
        alloc = allocate_widths(
            {"previous": max(ious[k] for k in order[:i]), "incoming": ious[order[i]]},
            total=96, multiple=16, floor=16,
        )
        pairs.append((alloc["previous"], alloc["incoming"]))
    seq_merged, stages, seq_cache = train_sequential(
        [(k, bases[k]) for k in order], pairs, data, classifier_spec, settings,
        base_seed=pipeline._seed_for(cfg, "sequential", 0),
    )
    seq_probs = evaluate_proba(seq_merged, seq_cache["test"], precomputed=True)

    return {
        "config": cfg,
        "data": data,
        "audit": audit,
        "individual": individual,
        "bases": bases,
        "hashes_after_stage1": hashes_after_stage1,
        "merged": merged,
        "combined_report": combined_report,
        "two_stage_test_accuracy": float(np.mean(test_probs.argmax(1) == data.y_test)),
        "two_stage_val_iou": _macro_iou(val_probs, data.y_val, 4),
        "sequential": seq_merged,
        "sequential_stages": stages,
        "sequential_test_accuracy": float(np.mean(seq_probs.argmax(1) == data.y_test)),
        "transform_time_s": transform_time,
        "two_stage_elapsed_s": two_stage_elapsed,
        "total_elapsed_s": time.perf_counter() - started,
    }
