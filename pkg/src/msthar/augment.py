"""Training-set augmentation for sensor windows.

Five composable techniques: additive jitter, per-channel scaling,
segment permutation, smooth magnitude warping, and smooth time warping.
Composed augmentation applies all five in the fixed order
jitter -> scale -> permute -> magnitude warp -> time warp (noise before
structural edits, mimicking acquisition followed by re-segmentation).
Every technique preserves the (channels, length) shape, and a fully
neutral configuration is a bit-exact identity.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .data import TimeSeriesWindow

__all__ = [
    "AugmentationConfig",
    "jitter",
    "scale",
    "permute_segments",
    "magnitude_warp",
    "time_warp",
    "time_warp_map",
    "compose_all_five",
    "augment_window",
    "balance_dataset",
]

_MIN_WARP_RATE = 0.05  # keeps the cumulative time-warp map strictly increasing


@dataclass(frozen=True)
class AugmentationConfig:
    """Magnitudes for the five techniques plus the base RNG seed.

    ``jitter_std`` is in sensor units; ``None`` selects 5% of each
    channel's standard deviation.  Scale factors are drawn per channel
    from Normal(1, scale_std^2).  Warp curves are cubic splines through
    ``*_knots`` control points drawn from Normal(1, std^2).
    """

    jitter_std: float | None = None
    scale_std: float = 0.1
    n_segments: int = 4
    magwarp_std: float = 0.2
    magwarp_knots: int = 4
    timewarp_std: float = 0.2
    timewarp_knots: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("jitter_std", "scale_std", "magwarp_std", "timewarp_std"):
            value = getattr(self, name)
            if value is not None and not (np.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if self.n_segments < 1:
            raise ValueError(f"n_segments must be >= 1, got {self.n_segments}")
        for name in ("magwarp_knots", "timewarp_knots"):
            if getattr(self, name) < 2:
                raise ValueError(f"{name} must be >= 2, got {getattr(self, name)}")

    def neutral(self) -> "AugmentationConfig":
        """The identity configuration (useful in tests)."""
        return replace(self, jitter_std=0.0, scale_std=0.0, n_segments=1,
                       magwarp_std=0.0, timewarp_std=0.0)


def _check_values(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected [channels, length] values, got shape {values.shape}")
    return values


def jitter(values: np.ndarray, std: float | None, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. Gaussian noise per sample.

    ``std=None`` uses 5% of each channel's own standard deviation.
    """
    values = _check_values(values)
    if std is not None and std < 0:
        raise ValueError(f"jitter std must be >= 0, got {std}")
    if std is not None:
        scale_per_channel = np.full(values.shape[0], float(std))
    else:
        scale_per_channel = 0.05 * values.std(axis=1)
    if not scale_per_channel.any():
        return values.copy()
    noise = rng.normal(0.0, 1.0, size=values.shape) * scale_per_channel[:, None]
    return values + noise


def scale(values: np.ndarray, scale_std: float, rng: np.random.Generator) -> np.ndarray:
    """Multiply each channel by one factor drawn from Normal(1, scale_std^2)."""
    values = _check_values(values)
    if scale_std < 0:
        raise ValueError(f"scale_std must be >= 0, got {scale_std}")
    if scale_std == 0:
        return values.copy()
    factors = rng.normal(1.0, scale_std, size=(values.shape[0], 1))
    return values * factors


def permute_segments(values: np.ndarray, n_segments: int, rng: np.random.Generator) -> np.ndarray:
    """Split into contiguous near-equal segments and reorder them.

    The same random order is applied to every channel so cross-sensor
    alignment is preserved.
    """
    values = _check_values(values)
    if n_segments < 1:
        raise ValueError(f"n_segments must be >= 1, got {n_segments}")
    if n_segments > values.shape[1]:
        raise ValueError(
            f"n_segments {n_segments} exceeds window length {values.shape[1]}"
        )
    if n_segments == 1:
        return values.copy()
    segments = np.array_split(np.arange(values.shape[1]), n_segments)
    order = rng.permutation(n_segments)
    index = np.concatenate([segments[i] for i in order])
    return values[:, index]


def _warp_curves(length: int, std: float, knots: int, rng, n_curves: int) -> np.ndarray:
    """Cubic-spline curves through knot values ~ Normal(1, std^2): [n_curves, length]."""
    positions = np.linspace(0.0, length - 1.0, knots)
    draws = rng.normal(1.0, std, size=(n_curves, knots))
    grid = np.arange(length, dtype=np.float64)
    return np.stack([CubicSpline(positions, d, bc_type="natural")(grid) for d in draws])


def magnitude_warp(values: np.ndarray, std: float, knots: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Multiply each channel by a smooth random curve around 1."""
    values = _check_values(values)
    if std < 0:
        raise ValueError(f"magnitude warp std must be >= 0, got {std}")
    if knots < 2:
        raise ValueError(f"magnitude warp needs >= 2 knots, got {knots}")
    if std == 0:
        return values.copy()
    curves = _warp_curves(values.shape[1], std, knots, rng, values.shape[0])
    return values * curves


def time_warp_map(length: int, std: float, knots: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Strictly increasing warped sample positions with fixed endpoints.

    A rate curve (spline through knot draws around 1, floored to stay
    positive) is accumulated and rescaled so position 0 maps to 0 and
    position length-1 maps to length-1.
    """
    rate = np.maximum(_warp_curves(length, std, knots, rng, 1)[0], _MIN_WARP_RATE)
    cumulative = np.concatenate([[0.0], np.cumsum(rate[:-1])])
    warp = cumulative * (length - 1.0) / cumulative[-1]
    warp[-1] = length - 1.0  # pin the endpoint exactly against rounding
    return warp


def time_warp(values: np.ndarray, std: float, knots: int,
              rng: np.random.Generator) -> np.ndarray:
    """Smoothly vary the sampling interval and re-interpolate.

    Every channel is linearly resampled at the same warped positions, so
    cross-sensor alignment and the window length are both preserved.
    """
    values = _check_values(values)
    if std < 0:
        raise ValueError(f"time warp std must be >= 0, got {std}")
    if knots < 2:
        raise ValueError(f"time warp needs >= 2 knots, got {knots}")
    if std == 0:
        return values.copy()
    length = values.shape[1]
    warp = time_warp_map(length, std, knots, rng)
    grid = np.arange(length, dtype=np.float64)
    return np.stack([np.interp(warp, grid, values[c]) for c in range(values.shape[0])])


def compose_all_five(values: np.ndarray, cfg: AugmentationConfig,
                     rng: np.random.Generator) -> np.ndarray:
    """Apply all five techniques sequentially with one RNG stream."""
    out = jitter(values, cfg.jitter_std, rng)
    out = scale(out, cfg.scale_std, rng)
    out = permute_segments(out, cfg.n_segments, rng)
    out = magnitude_warp(out, cfg.magwarp_std, cfg.magwarp_knots, rng)
    out = time_warp(out, cfg.timewarp_std, cfg.timewarp_knots, rng)
    return out


def augment_window(window: TimeSeriesWindow, cfg: AugmentationConfig,
                   rng: np.random.Generator, new_id: int) -> TimeSeriesWindow:
    """Augmented copy of a window, provenance-tagged to its source."""
    return TimeSeriesWindow(
        window_id=new_id,
        values=compose_all_five(window.values, cfg, rng),
        sampling_rate_hz=window.sampling_rate_hz,
        label=window.label,
        subject=window.subject,
        source_id=window.window_id,
    )


def balance_dataset(samples: list[TimeSeriesWindow], cfg: AugmentationConfig,
                    target_per_class: int | None = None) -> list[TimeSeriesWindow]:
    """Append augmented copies until every class reaches the target count.

    The default target is the majority-class count, so minority classes
    are augmented at a higher rate and an already balanced set gains
    nothing.  Originals are returned untouched (same objects) followed
    by the augmented copies; labels are copied and each copy's
    ``source_id`` names its source window.  Per-copy RNG streams are
    derived deterministically from (config seed, source id, copy index).
    """
    if any(w.label is None for w in samples):
        raise ValueError("balance_dataset requires labeled windows")
    by_class: dict[int, list[TimeSeriesWindow]] = {}
    for w in samples:
        by_class.setdefault(w.label, []).append(w)
    if not by_class:
        return []
    for label, members in by_class.items():
        if not members:
            raise ValueError(f"class {label} has no samples to augment from")
    target = target_per_class if target_per_class is not None else max(
        len(m) for m in by_class.values()
    )

    out = list(samples)
    next_id = max(w.window_id for w in samples) + 1
    for label in sorted(by_class):
        members = sorted(by_class[label], key=lambda w: w.window_id)
        deficit = target - len(members)
        for i in range(max(deficit, 0)):
            source = members[i % len(members)]
            copy_round = i // len(members)
            seq = np.random.SeedSequence(
                entropy=cfg.seed, spawn_key=(source.window_id, copy_round)
            )
            out.append(augment_window(source, cfg, np.random.default_rng(seq), next_id))
            next_id += 1
    return out
