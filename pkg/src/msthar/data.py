"""Sensor windows, dataset ingestion, fold management, synthetic data.

Windows are the unit of all processing: a fixed-length multichannel
segment with an integer class label.  Loaders are pure functions of
file bytes; fold construction is seeded and deterministic.  Augmented
windows carry a ``source_id`` pointing at the original they were
derived from, which is how the train/test firewall is audited.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataFormatError",
    "TimeSeriesWindow",
    "DatasetManifest",
    "FoldSplit",
    "load_uci_raw",
    "load_canonical_csv",
    "write_canonical_csv",
    "make_folds",
    "synth_generate",
    "channel_stats",
    "apply_zscore",
]

UCI_SIGNAL_STEMS = tuple(
    f"{sensor}_{axis}"
    for sensor in ("body_acc", "body_gyro", "total_acc")
    for axis in ("x", "y", "z")
)
UCI_SAMPLING_RATE_HZ = 50.0


class DataFormatError(ValueError):
    """A dataset file violates its declared layout."""


@dataclass
class TimeSeriesWindow:
    """Fixed-length multichannel sensor segment.

    ``values`` is ``[channels, length]`` float64.  ``source_id`` is None
    for originals and the originating window's id for augmented copies.
    """

    window_id: int
    values: np.ndarray
    sampling_rate_hz: float
    label: int | None = None
    subject: int | None = None
    source_id: int | None = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"window values must be [channels, length], got {self.values.shape}")
        if self.values.shape[1] < 8:
            raise ValueError(f"window length must be >= 8, got {self.values.shape[1]}")
        if not self.sampling_rate_hz > 0:
            raise ValueError(f"sampling rate must be positive, got {self.sampling_rate_hz}")

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    @property
    def is_augmented(self) -> bool:
        return self.source_id is not None


@dataclass
class DatasetManifest:
    """Declared layout of a windowed dataset."""

    name: str
    class_names: list[str]
    channel_names: list[str]
    sampling_rate_hz: float
    window_length: int

    def __post_init__(self):
        if len(self.class_names) < 2:
            raise ValueError("a dataset needs at least 2 classes")
        if not self.channel_names:
            raise ValueError("a dataset needs at least 1 channel")
        if self.window_length < 8:
            raise ValueError(f"window_length must be >= 8, got {self.window_length}")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.__dict__, indent=2, sort_keys=True))

    @classmethod
    def from_json(cls, path):
        return cls(**json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# UCI raw layout


def _read_float_table(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                row = [float(t) for t in tokens]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: non-numeric token ({exc})") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {width} values per row, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    return np.asarray(rows, dtype=np.float64)


def _read_int_column(path: Path) -> list[int]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            token = line.strip()
            if not token:
                continue
            try:
                out.append(int(token))
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-integer token {token!r}") from None
    return out


def _find_uci_file(directory: Path, candidates: list[str]) -> Path:
    for name in candidates:
        for base in (directory, directory / "Inertial Signals"):
            p = base / name
            if p.is_file():
                return p
    raise DataFormatError(
        f"{directory}: none of {candidates} found (looked in the directory "
        f"and its 'Inertial Signals' subdirectory)"
    )


def load_uci_raw(directory) -> list[TimeSeriesWindow]:
    """Load windows from the published UCI smartphone-HAR text layout.

    Expects the nine inertial-signal files (body_acc/body_gyro/total_acc
    x/y/z), one row of whitespace-separated decimals per window, plus a
    label file (integers 1..6) and a subject file with matching row
    counts.  Labels are converted to zero-based class indices.
    """
    directory = Path(directory)
    suffix = None
    for cand in ("train", "test"):
        if (directory / f"y_{cand}.txt").is_file():
            suffix = f"_{cand}"
            break
    if suffix is None:
        if (directory / "y.txt").is_file():
            suffix = ""
        else:
            raise DataFormatError(f"{directory}: no label file (y_train.txt / y_test.txt / y.txt)")

    label_path = directory / f"y{suffix}.txt"
    labels = _read_int_column(label_path)
    subject_path = directory / f"subject{suffix}.txt"
    subjects = _read_int_column(subject_path) if subject_path.is_file() else [0] * len(labels)
    if len(subjects) != len(labels):
        raise DataFormatError(
            f"row-count mismatch: {label_path} has {len(labels)} rows, "
            f"{subject_path} has {len(subjects)}"
        )

    tables = []
    first_path = None
    for stem in UCI_SIGNAL_STEMS:
        path = _find_uci_file(directory, [f"{stem}{suffix}.txt", f"{stem}.txt"])
        table = _read_float_table(path)
        if first_path is None:
            first_path = path
        elif table.shape != tables[0].shape:
            raise DataFormatError(
                f"row-count mismatch: {first_path} has shape {tables[0].shape}, "
                f"{path} has shape {table.shape}"
            )
        tables.append(table)
    if tables[0].shape[0] != len(labels):
        raise DataFormatError(
            f"row-count mismatch: {first_path} has {tables[0].shape[0]} rows, "
            f"{label_path} has {len(labels)}"
        )

    stacked = np.stack(tables, axis=1)  # [windows, channels, length]
    return [
        TimeSeriesWindow(
            window_id=i,
            values=stacked[i],
            sampling_rate_hz=UCI_SAMPLING_RATE_HZ,
            label=labels[i] - 1,
            subject=subjects[i],
        )
        for i in range(stacked.shape[0])
    ]


# ---------------------------------------------------------------------------
# canonical long-format CSV

CSV_HEADER = ["window_id", "channel", "t", "value", "label"]


def load_canonical_csv(path, manifest: DatasetManifest) -> list[TimeSeriesWindow]:
    """Load pre-windowed data from the long-format CSV intermediate.

    Header is ``window_id,channel,t,value,label``; every (window,
    channel) pair must cover t = 0..window_length-1 with no gaps and a
    single consistent label per window.
    """
    path = Path(path)
    channel_index = {name: i for i, name in enumerate(manifest.channel_names)}
    length = manifest.window_length
    cells: dict[int, np.ndarray] = {}
    seen: dict[int, np.ndarray] = {}
    labels: dict[int, int] = {}

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise DataFormatError(f"{path}: expected header {','.join(CSV_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise DataFormatError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            wid_s, channel, t_s, value_s, label_s = row
            try:
                wid, t, value, label = int(wid_s), int(t_s), float(value_s), int(label_s)
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: bad value ({exc})") from None
            if channel not in channel_index:
                raise DataFormatError(f"{path}:{lineno}: unknown channel {channel!r}")
            if not 0 <= t < length:
                raise DataFormatError(f"{path}:{lineno}: t={t} outside 0..{length - 1}")
            if wid not in cells:
                cells[wid] = np.zeros((len(channel_index), length))
                seen[wid] = np.zeros((len(channel_index), length), dtype=bool)
            c = channel_index[channel]
            cells[wid][c, t] = value
            seen[wid][c, t] = True
            if wid in labels and labels[wid] != label:
                raise DataFormatError(
                    f"{path}:{lineno}: window {wid} has inconsistent labels "
                    f"{labels[wid]} and {label}"
                )
            labels[wid] = label

    windows = []
    for wid in sorted(cells):
        missing = ~seen[wid]
        if missing.any():
            c, t = np.argwhere(missing)[0]
            raise DataFormatError(
                f"{path}: window {wid} is missing samples, first gap at "
                f"channel {manifest.channel_names[c]!r} t={t}"
            )
        if not 0 <= labels[wid] < manifest.n_classes:
            raise DataFormatError(
                f"{path}: window {wid} label {labels[wid]} outside 0..{manifest.n_classes - 1}"
            )
        windows.append(
            TimeSeriesWindow(
                window_id=wid,
                values=cells[wid],
                sampling_rate_hz=manifest.sampling_rate_hz,
                label=labels[wid],
            )
        )
    return windows


def write_canonical_csv(path, windows: list[TimeSeriesWindow], manifest: DatasetManifest):
    """Write windows in the long CSV format; values round-trip exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for w in windows:
            for c, channel in enumerate(manifest.channel_names):
                for t in range(w.length):
                    writer.writerow(
                        [w.window_id, channel, t, repr(float(w.values[c, t])), w.label]
                    )


# ---------------------------------------------------------------------------
# folds


@dataclass
class FoldSplit:
    """Assignment of window ids to k disjoint folds.

    Fold f's test set is the windows assigned to f; its training set is
    everything else.  Augmented windows never enter a split; they are
    derived per fold from training originals downstream.
    """

    k: int
    assignment: dict[int, int] = field(default_factory=dict)

    def test_ids(self, fold: int) -> list[int]:
        return sorted(i for i, f in self.assignment.items() if f == fold)

    def train_ids(self, fold: int) -> list[int]:
        return sorted(i for i, f in self.assignment.items() if f != fold)

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for f in self.assignment.values():
            sizes[f] += 1
        return sizes


def make_folds(windows: list[TimeSeriesWindow], k: int = 5, seed: int = 0,
               stratify_by_class: bool = True, subject_wise: bool = False) -> FoldSplit:
    """Partition windows into k folds of near-equal size.

    Stratified mode deals each class's shuffled windows onto a single
    rotating fold cursor, so overall fold sizes differ by at most one
    and per-fold class counts differ by at most one.  Subject-wise mode
    keeps each subject's windows in a single fold instead.
    """
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if len(windows) < k:
        raise ValueError(f"cannot split {len(windows)} windows into {k} folds")
    rng = np.random.default_rng(seed)
    assignment: dict[int, int] = {}

    if subject_wise:
        groups: dict[int, list[int]] = {}
        for w in windows:
            groups.setdefault(w.subject if w.subject is not None else -1, []).append(w.window_id)
        order = sorted(groups, key=lambda s: (-len(groups[s]), s))
        loads = [0] * k
        for subject in order:
            fold = int(np.argmin(loads))
            for wid in groups[subject]:
                assignment[wid] = fold
            loads[fold] += len(groups[subject])
        return FoldSplit(k=k, assignment=assignment)

    if stratify_by_class:
        by_class: dict[int, list[int]] = {}
        for w in windows:
            by_class.setdefault(w.label if w.label is not None else -1, []).append(w.window_id)
        cursor = 0
        for label in sorted(by_class):
            ids = sorted(by_class[label])
            rng.shuffle(ids)
            for wid in ids:
                assignment[wid] = cursor % k
                cursor += 1
        return FoldSplit(k=k, assignment=assignment)

    ids = sorted(w.window_id for w in windows)
    rng.shuffle(ids)
    for cursor, wid in enumerate(ids):
        assignment[wid] = cursor % k
    return FoldSplit(k=k, assignment=assignment)


# ---------------------------------------------------------------------------
# synthetic data


def synth_generate(n_per_class, classes: int, channels: int, length: int,
                   seed: int = 0) -> list[TimeSeriesWindow]:
    """Deterministic separable multichannel dataset for desk-scale runs.

    Each class is a bank of sinusoids with class-specific fundamental
    frequencies and cross-channel phase couplings, plus a small shared
    phase jitter, per-channel amplitude jitter, and additive Gaussian
    noise.  ``n_per_class`` may be an int or one count per class.
    """
    if isinstance(n_per_class, (int, np.integer)):
        counts = [int(n_per_class)] * classes
    else:
        counts = [int(n) for n in n_per_class]
        if len(counts) != classes:
            raise ValueError(f"n_per_class has {len(counts)} entries for {classes} classes")
    if any(c < 1 for c in counts):
        raise ValueError("every class needs at least one window")

    rng = np.random.default_rng(seed)
    t = np.arange(length) / length
    max_freq = max(3, length // 8)
    freqs = [3 + round(k * (max_freq - 3) / max(1, classes - 1)) for k in range(classes)]

    windows = []
    wid = 0
    for k, count in enumerate(counts):
        f0 = freqs[k]
        couplings = 2.0 * np.pi * np.arange(channels) / channels + np.pi * k / classes
        for _ in range(count):
            delta = rng.uniform(-0.3, 0.3)
            amps = rng.normal(1.0, 0.1, size=channels)
            noise = rng.normal(0.0, 0.25, size=(channels, length))
            base = np.sin(2.0 * np.pi * f0 * t[None, :] + couplings[:, None] + delta)
            harmonic = 0.4 * np.sin(
                4.0 * np.pi * f0 * t[None, :] + 2.0 * couplings[:, None] + 1.7 * delta
            )
            values = amps[:, None] * (base + harmonic) + noise
            windows.append(
                TimeSeriesWindow(
                    window_id=wid,
                    values=values,
                    sampling_rate_hz=float(length),
                    label=k,
                    subject=wid % 7,
                )
            )
            wid += 1
    return windows


# ---------------------------------------------------------------------------
# normalization


def channel_stats(windows: list[TimeSeriesWindow]):
    """Per-channel mean and std pooled over all samples of the windows."""
    if not windows:
        raise ValueError("channel_stats needs at least one window")
    stacked = np.concatenate([w.values for w in windows], axis=1)
    return stacked.mean(axis=1), stacked.std(axis=1)


def apply_zscore(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Normalize channels with train-fold statistics (std floored at 1e-12)."""
    return (values - mean[:, None]) / np.maximum(std, 1e-12)[:, None]
