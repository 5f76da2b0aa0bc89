#!/usr/bin/env python3
"""Tour of the four representation spaces.

A single synthetic sensor window is mapped into each space: the raw
identity pass-through, the wavelet scattering coefficient vector, the
Gramian angular field, and the recurrence plot.  Figures land in
./demo_output/.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from msthar.data import synth_generate
from msthar.transforms import (
    GafConfig,
    RecurrenceConfig,
    ScatteringConfig,
    transform_window,
)

out_dir = Path(__file__).resolve().parent / "demo_output"
out_dir.mkdir(exist_ok=True)

# One window from each of two classes, so the representations can be
# compared side by side.
windows = synth_generate(1, classes=2, channels=3, length=128, seed=7)
slow, fast = windows

print(f"window shape: {slow.values.shape}, labels: {slow.label} vs {fast.label}")

kinds = {
    "identity": None,
    "scattering": ScatteringConfig(wavelets_per_octave=4),
    "gaf": GafConfig(),
    "recurrence": RecurrenceConfig(),
}

for kind, cfg in kinds.items():
    a = transform_window(slow, kind, cfg).tensor
    b = transform_window(fast, kind, cfg).tensor
    print(f"{kind:>10}: tensor {a.shape}")

    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, tensor, title in ((axes[0], a, "low-frequency class"),
                              (axes[1], b, "high-frequency class")):
        if tensor.ndim == 2:          # channels x features
            for c in range(tensor.shape[0]):
                ax.plot(tensor[c], lw=0.8, label=f"ch{c}")
            ax.legend(fontsize=7)
        else:                          # channels x H x W, show channel 0
            ax.imshow(tensor[0], cmap="viridis")
        ax.set_title(f"{kind}: {title}", fontsize=9)
    fig.tight_layout()
    fig.savefig(out_dir / f"representation_{kind}.png", dpi=110)
    plt.close(fig)

print(f"figures written to {out_dir}")
