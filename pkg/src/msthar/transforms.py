"""Per-channel representations of sensor windows.

Four representation spaces are supported: the identity pass-through, a
Gramian angular field (polar-angle cosine matrix), a thresholded
recurrence plot, and a wavelet scattering coefficient vector.  Each
transform maps one channel; ``transform_window`` applies it to every
channel of a window and stacks the results along a leading channel
axis, preserving channel order and time alignment.

All transforms are pure: the same input and config always produce
bit-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .data import TimeSeriesWindow

__all__ = [
    "GafConfig",
    "RecurrenceConfig",
    "ScatteringConfig",
    "TransformedSample",
    "TRANSFORM_KINDS",
    "gaf_transform",
    "polar_coordinates",
    "recurrence_plot",
    "scattering_transform",
    "scattering_feature_count",
    "identity_transform",
    "piecewise_aggregate",
    "transform_window",
]

TRANSFORM_KINDS = ("identity", "scattering", "gaf", "recurrence")


@dataclass(frozen=True)
class GafConfig:
    """Settings for the Gramian angular field.

    ``span_constant`` regularizes the polar radius (timestamp / constant);
    the radius is exposed for inspection but does not enter the encoded
    matrix.  ``paa_segments`` optionally reduces the channel to that many
    piecewise-aggregate means before encoding (off by default).
    """

    span_constant: float | None = None
    paa_segments: int | None = None

    def __post_init__(self):
        if self.span_constant is not None and not self.span_constant > 0:
            raise ValueError(f"span_constant must be positive, got {self.span_constant}")
        if self.paa_segments is not None and self.paa_segments < 1:
            raise ValueError(f"paa_segments must be >= 1, got {self.paa_segments}")


@dataclass(frozen=True)
class RecurrenceConfig:
    """Settings for recurrence plots.

    ``threshold`` is the recurrence distance; ``None`` selects 0.2 times
    the channel's standard deviation.  Distance exactly at the threshold
    counts as recurrent.  Embedding uses ``embedding_dim`` samples spaced
    ``delay`` apart (euclidean norm between embedded states).
    """

    embedding_dim: int = 1
    delay: int = 1
    threshold: float | None = None
    paa_segments: int | None = None

    def __post_init__(self):
        if self.embedding_dim < 1:
            raise ValueError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        if self.delay < 1:
            raise ValueError(f"delay must be >= 1, got {self.delay}")
        if self.threshold is not None and not self.threshold >= 0:
            raise ValueError(f"threshold must be non-negative, got {self.threshold}")
        if self.paa_segments is not None and self.paa_segments < 1:
            raise ValueError(f"paa_segments must be >= 1, got {self.paa_segments}")


@dataclass(frozen=True)
class ScatteringConfig:
    """Settings for the 1D wavelet scattering transform.

    ``max_order`` is 1 or 2.  ``wavelets_per_octave`` applies to the
    first-order Morlet bank; the second-order bank always uses one
    wavelet per octave.  ``octaves`` sets the frequency span; the
    Gaussian lowpass averages over roughly ``lowpass_scale`` samples and
    coefficients are subsampled by that factor (default ``2**octaves``).
    """

    max_order: int = 2
    wavelets_per_octave: int = 8
    octaves: int = 6
    lowpass_scale: int | None = None

    def __post_init__(self):
        if self.max_order not in (1, 2):
            raise ValueError(f"max_order must be 1 or 2, got {self.max_order}")
        if self.wavelets_per_octave < 1:
            raise ValueError(
                f"wavelets_per_octave must be >= 1, got {self.wavelets_per_octave}"
            )
        if self.octaves < 1:
            raise ValueError(f"octaves must be >= 1, got {self.octaves}")
        if self.lowpass_scale is not None and self.lowpass_scale < 1:
            raise ValueError(f"lowpass_scale must be >= 1, got {self.lowpass_scale}")

    def resolved_lowpass(self) -> int:
        return self.lowpass_scale if self.lowpass_scale is not None else 2 ** self.octaves


@dataclass
class TransformedSample:
    """One window mapped into a representation space.

    ``tensor`` is ``[channels, features]`` for 1D kinds and
    ``[channels, H, W]`` for image kinds; ``window_id`` records
    provenance back to the source window.
    """

    kind: str
    tensor: np.ndarray
    window_id: int


def piecewise_aggregate(channel: np.ndarray, segments: int) -> np.ndarray:
    """Reduce a series to ``segments`` means over contiguous chunks."""
    x = np.asarray(channel, dtype=np.float64)
    if segments > x.shape[-1]:
        raise ValueError(
            f"piecewise_aggregate: {segments} segments exceed length {x.shape[-1]}"
        )
    return np.array([seg.mean() for seg in np.array_split(x, segments)])


# ---------------------------------------------------------------------------
# Gramian angular field


def _minmax_unit(x: np.ndarray) -> np.ndarray:
    """Min-max normalize into [-1, 1]; a constant channel maps to zeros."""
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (2.0 * x - hi - lo) / (hi - lo)


def polar_coordinates(channel: np.ndarray, cfg: GafConfig | None = None):
    """Return the polar encoding (angles, radii) of a channel.

    Angles are arccos of the normalized values; radii are 1-based
    timestamps divided by the span constant.  Radii are informational
    only; the encoded matrix uses the angles alone.
    """
    cfg = cfg or GafConfig()
    x = np.asarray(channel, dtype=np.float64)
    if cfg.paa_segments is not None:
        x = piecewise_aggregate(x, cfg.paa_segments)
    n = x.shape[0]
    span = cfg.span_constant if cfg.span_constant is not None else float(n)
    scaled = np.clip(_minmax_unit(x), -1.0, 1.0)
    phi = np.arccos(scaled)
    radius = np.arange(1, n + 1, dtype=np.float64) / span
    return phi, radius


def gaf_transform(channel: np.ndarray, cfg: GafConfig | None = None) -> np.ndarray:
    """Encode a channel as the matrix of cosines of summed polar angles.

    The channel is min-max normalized into [-1, 1] first (a constant
    channel normalizes to zeros rather than erroring, since flat
    segments occur in static activities).  The result is symmetric with
    diagonal ``2 x_i**2 - 1``.
    """
    phi, _ = polar_coordinates(channel, cfg)
    return np.cos(phi[:, None] + phi[None, :])


# ---------------------------------------------------------------------------
# recurrence plot


def _embed(x: np.ndarray, dim: int, delay: int) -> np.ndarray:
    n_states = x.shape[0] - (dim - 1) * delay
    if n_states < 1:
        raise ValueError(
            f"recurrence_plot: embedding dim {dim} with delay {delay} "
            f"needs more than {x.shape[0]} samples"
        )
    idx = np.arange(n_states)[:, None] + np.arange(dim)[None, :] * delay
    return x[idx]


def recurrence_plot(channel: np.ndarray, cfg: RecurrenceConfig | None = None) -> np.ndarray:
    """Binary matrix of embedded states closer than the threshold.

    Entry (i, j) is 1 when the euclidean distance between states i and j
    is at most the threshold (distance exactly at the threshold counts),
    so the matrix is symmetric with unit diagonal.
    """
    cfg = cfg or RecurrenceConfig()
    x = np.asarray(channel, dtype=np.float64)
    if cfg.paa_segments is not None:
        x = piecewise_aggregate(x, cfg.paa_segments)
    eps = cfg.threshold if cfg.threshold is not None else 0.2 * float(x.std())
    states = _embed(x, cfg.embedding_dim, cfg.delay)
    diff = states[:, None, :] - states[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=-1))
    return (dist <= eps).astype(np.float64)


# ---------------------------------------------------------------------------
# wavelet scattering


def _gauss_periodized(omega: np.ndarray, center: float, sigma: float) -> np.ndarray:
    # one 2*pi wrap is enough for filters concentrated in [0, pi]
    return (
        np.exp(-((omega - center) ** 2) / (2.0 * sigma**2))
        + np.exp(-((omega - 2.0 * np.pi - center) ** 2) / (2.0 * sigma**2))
    )


def _morlet_hat(omega: np.ndarray, center: float, sigma: float) -> np.ndarray:
    """Frequency response of a zero-mean Morlet, peak-normalized."""
    raw = _gauss_periodized(omega, center, sigma)
    low = _gauss_periodized(omega, 0.0, sigma)
    psi = raw - (raw[0] / low[0]) * low  # exact zero at DC
    peak = np.abs(psi).max()
    return psi / peak if peak > 0 else psi


class _ScatteringBank:
    """Precomputed frequency-domain filters for one (length, config) pair."""

    XI_MAX = 3.0 * np.pi / 4.0

    def __init__(self, length: int, cfg: ScatteringConfig):
        if 2 ** cfg.octaves > length:
            raise ValueError(
                f"scattering: 2^octaves = {2 ** cfg.octaves} exceeds window length {length}"
            )
        subsample = cfg.resolved_lowpass()
        if length % subsample != 0:
            raise ValueError(
                f"scattering: window length {length} is not a multiple of the "
                f"lowpass subsampling factor {subsample}"
            )
        self.length = length
        self.cfg = cfg
        self.subsample = subsample
        omega = 2.0 * np.pi * np.arange(length) / length
        sigma_floor = np.pi / length

        def bank(q: int, count: int):
            centers = self.XI_MAX * 2.0 ** (-np.arange(count) / q)
            sigmas = np.maximum(centers * (2.0 ** (1.0 / (2 * q)) - 1.0) / np.sqrt(np.log(2.0)),
                                sigma_floor)
            filters = np.stack([_morlet_hat(omega, c, s) for c, s in zip(centers, sigmas)])
            return centers, filters

        q1 = cfg.wavelets_per_octave
        self.centers1, self.psi1 = bank(q1, cfg.octaves * q1)
        self.centers2, self.psi2 = bank(1, cfg.octaves)

        sigma_t = 0.8 * subsample
        self.phi = _gauss_periodized(omega, 0.0, 1.0 / sigma_t)
        # paths (k1, k2) follow the frequency-decreasing convention
        self.paths = [
            (k1, k2)
            for k1 in range(len(self.centers1))
            for k2 in range(len(self.centers2))
            if self.centers2[k2] < self.centers1[k1]
        ]

    @property
    def n_features(self) -> int:
        per_path = self.length // self.subsample
        n_paths = 1
        n_paths += len(self.centers1)
        if self.cfg.max_order == 2:
            n_paths += len(self.paths)
        return n_paths * per_path

    def _smooth_subsample(self, spectra: np.ndarray) -> np.ndarray:
        averaged = np.fft.ifft(spectra * self.phi, axis=-1).real
        return averaged[..., ::self.subsample]

    def transform(self, signals: np.ndarray) -> np.ndarray:
        """Scatter a batch of signals [N, L] -> coefficients [N, F]."""
        x = np.atleast_2d(np.asarray(signals, dtype=np.float64))
        if x.shape[-1] != self.length:
            raise ValueError(
                f"scattering: bank built for length {self.length}, got {x.shape[-1]}"
            )
        spectrum = np.fft.fft(x, axis=-1)
        pieces = [self._smooth_subsample(spectrum)]

        u1 = np.abs(np.fft.ifft(spectrum[:, None, :] * self.psi1[None, :, :], axis=-1))
        u1_spec = np.fft.fft(u1, axis=-1)
        order1 = np.maximum(self._smooth_subsample(u1_spec), 0.0)
        pieces.append(order1.reshape(x.shape[0], -1))

        if self.cfg.max_order == 2:
            second = []
            for k1, k2 in self.paths:
                u2 = np.abs(np.fft.ifft(u1_spec[:, k1, :] * self.psi2[k2], axis=-1))
                coef = np.maximum(self._smooth_subsample(np.fft.fft(u2, axis=-1)), 0.0)
                second.append(coef)
            pieces.append(np.concatenate(second, axis=-1))
        return np.concatenate(pieces, axis=-1)


@lru_cache(maxsize=32)
def _bank(length: int, cfg: ScatteringConfig) -> _ScatteringBank:
    return _ScatteringBank(length, cfg)


def scattering_feature_count(length: int, cfg: ScatteringConfig | None = None) -> int:
    """Output vector length for a given window length and config."""
    return _bank(length, cfg or ScatteringConfig()).n_features


def scattering_transform(channel: np.ndarray, cfg: ScatteringConfig | None = None) -> np.ndarray:
    """Concatenated scattering coefficients of orders 0..max_order.

    Implements the standard cascade: modulus of Morlet wavelet
    convolutions, Gaussian lowpass averaging, subsampling by the lowpass
    scale.  Coefficients of orders >= 1 are non-negative.
    """
    cfg = cfg or ScatteringConfig()
    x = np.asarray(channel, dtype=np.float64)
    return _bank(x.shape[-1], cfg).transform(x)[0]


# ---------------------------------------------------------------------------
# identity and window-level stacking


def identity_transform(channel: np.ndarray) -> np.ndarray:
    """Bit-identical copy of the raw channel (no normalization)."""
    return np.array(channel, dtype=np.float64, copy=True)


def _channel_transform(kind: str, cfg):
    if kind == "identity":
        return identity_transform
    if kind == "gaf":
        return lambda ch: gaf_transform(ch, cfg)
    if kind == "recurrence":
        return lambda ch: recurrence_plot(ch, cfg)
    if kind == "scattering":
        return lambda ch: scattering_transform(ch, cfg)
    raise ValueError(f"unknown transform kind {kind!r}; expected one of {TRANSFORM_KINDS}")


def transform_window(window: TimeSeriesWindow, kind: str, cfg=None) -> TransformedSample:
    """Apply one transform to every channel and stack along axis 0."""
    fn = _channel_transform(kind, cfg)
    stacked = np.stack([fn(window.values[c]) for c in range(window.n_channels)])
    return TransformedSample(kind=kind, tensor=stacked, window_id=window.window_id)
