#!/usr/bin/env python3
"""Sequential multi-stage training: one new branch per stage.

After the shared individual stage, branches are accreted pairwise in
descending order of individual validation IoU; each stage trains only
two branch denses plus a fresh classifier on top of everything frozen
so far.  Prints the per-stage IoU series (the plot-ready numbers land
in stages.csv).
"""

import tempfile
from pathlib import Path

from msthar import pipeline

config = pipeline.resolve_config({
    "dataset": {"classes": 3, "channels": 3, "length": 128, "windows_per_class": 40},
    "transforms": ["identity", "scattering", "gaf", "recurrence"],
    "gaf": {"paa_segments": 32},
    "recurrence": {"paa_segments": 32},
    "scattering": {"wavelets_per_octave": 4},
    "model": {"base_1d": {"filters": [8, 16, 32]}, "base_2d": {"filters": [4, 8, 16]},
              "classifier_hidden": [32]},
    "sequential": {"total": 48, "multiple": 16, "floor": 16},
    "training": {"seed": 1, "max_epochs": 40, "batch_size": 32, "patience": 8,
                 "lr": 3e-4},
    "folds": 4,
})

out = Path(tempfile.mkdtemp(prefix="msthar-sequential-"))
result = pipeline.run_scheme(config, "sequential", out_dir=out, folds=[0])

print("\nvalidation IoU by training stage (stage 1 = best individual):")
previous = None
for stage, iou in result.stage_series:
    delta = "" if previous is None else f"  ({iou - previous:+.4f})"
    print(f"  stage {stage}: {iou:.4f}{delta}")
    previous = iou

fold_metrics = result.fold_metrics[0]
print(f"\nfinal merged network on the test fold: accuracy {fold_metrics.accuracy:.4f}, "
      f"macro IoU {fold_metrics.macro_iou:.4f}")
print(f"stage series also written to {out / 'stages.csv'}")
