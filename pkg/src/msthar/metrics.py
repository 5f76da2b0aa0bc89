"""Classification metrics, cross-fold aggregation, rank-sum testing.

Per class: precision = TP/(TP+FP), recall = TP/(TP+FN), and the Jaccard
overlap IoU = TP/(TP+FP+FN).  Macro averages are unweighted means over
classes.  Cross-fold dispersion uses the population standard deviation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "confusion_matrix",
    "per_class_metrics",
    "FoldMetrics",
    "fold_metrics",
    "aggregate_folds",
    "format_mean_std",
    "WilcoxonResult",
    "wilcoxon_rank_sum",
    "metrics_rows",
    "write_metrics_csv",
    "read_metrics_csv",
    "write_stages_csv",
    "read_stages_csv",
]

METRICS_CSV_HEADER = ["dataset", "scheme", "fold", "class", "precision", "recall", "iou", "accuracy"]
STAGES_CSV_HEADER = ["stage", "mean_iou"]


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    """Counts with rows = actual class, columns = predicted class."""
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError(
            f"predictions and labels must align, got {predictions.shape} vs {labels.shape}"
        )
    for name, arr in (("predictions", predictions), ("labels", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} outside 0..{n_classes - 1}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (labels, predictions), 1)
    return cm


def per_class_metrics(cm: np.ndarray) -> dict:
    """Precision/recall/IoU per class plus overall accuracy.

    A class with an empty denominator (never predicted, or absent from
    the data) scores 0 for the affected metric.
    """
    cm = np.asarray(cm)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp

    def safe(num, den):
        out = np.zeros_like(num)
        np.divide(num, den, out=out, where=den > 0)
        return out

    total = cm.sum()
    return {
        "precision": safe(tp, tp + fp),
        "recall": safe(tp, tp + fn),
        "iou": safe(tp, tp + fp + fn),
        "accuracy": float(tp.sum() / total) if total else 0.0,
    }


@dataclass
class FoldMetrics:
    """Evaluation of one test fold."""

    fold: int
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    iou: np.ndarray
    accuracy: float

    @property
    def macro_iou(self) -> float:
        return float(np.mean(self.iou))

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))


def fold_metrics(fold: int, predictions, labels, n_classes: int) -> FoldMetrics:
    cm = confusion_matrix(predictions, labels, n_classes)
    per = per_class_metrics(cm)
    return FoldMetrics(fold=fold, confusion=cm, precision=per["precision"],
                       recall=per["recall"], iou=per["iou"], accuracy=per["accuracy"])


def aggregate_folds(folds: list) -> dict:
    """Cross-fold mean and population std of the headline metrics."""
    if not folds:
        raise ValueError("aggregate_folds needs at least one fold")

    def mean_std(values):
        arr = np.asarray(values, dtype=np.float64)
        return float(arr.mean()), float(arr.std())

    return {
        "accuracy": mean_std([f.accuracy for f in folds]),
        "precision": mean_std([f.macro_precision for f in folds]),
        "recall": mean_std([f.macro_recall for f in folds]),
        "iou": mean_std([f.macro_iou for f in folds]),
    }


def format_mean_std(mean: float, std: float) -> str:
    """Render a fraction as a percentage 'mean±std' pair."""
    return f"{100.0 * mean:.2f}±{100.0 * std:.2f}"


# ---------------------------------------------------------------------------
# Wilcoxon rank-sum


@dataclass
class WilcoxonResult:
    statistic: float
    p_value: float
    method: str
    alpha: float
    alternative: str = "two-sided"

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha


def _midranks(pooled: np.ndarray) -> np.ndarray:
    order = np.argsort(pooled, kind="stable")
    ranks = np.empty(len(pooled), dtype=np.float64)
    i = 0
    while i < len(pooled):
        j = i
        while j + 1 < len(pooled) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_tails(doubled_ranks: np.ndarray, n: int, w2: int):
    """P(W <= w) and P(W >= w) for the sum of n ranks drawn without
    replacement, via subset-sum counting over doubled (integer) midranks."""
    total_sum = int(doubled_ranks.sum())
    counts = np.zeros((n + 1, total_sum + 1))
    counts[0, 0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        counts[1:, r:] += counts[:-1, : total_sum + 1 - r]
    distribution = counts[n]
    total = distribution.sum()
    lower = distribution[: w2 + 1].sum() / total
    upper = distribution[w2:].sum() / total
    return lower, upper


def wilcoxon_rank_sum(a, b, alpha: float = 0.01, method: str = "auto",
                      alternative: str = "two-sided") -> WilcoxonResult:
    """Rank-sum test with midranks for ties.

    The statistic is the rank sum of the first sample.  The exact
    distribution (used whenever both samples have at most 12 values) is
    computed over all subset assignments; larger samples use the normal
    approximation with tie correction and continuity correction.
    Two-sided p is twice the smaller tail, capped at 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    if alternative not in ("two-sided", "greater", "less"):
        raise ValueError(f"unknown alternative {alternative!r}")
    n, m = len(a), len(b)
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    w = float(ranks[:n].sum())

    if method == "auto":
        method = "exact" if (n <= 12 and m <= 12) else "normal-approximation"
    if method not in ("exact", "normal-approximation"):
        raise ValueError(f"unknown method {method!r}")

    if method == "exact":
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        w2 = int(round(2.0 * w))
        lower, upper = _exact_tails(doubled, n, w2)
    else:
        total = n + m
        mu = n * (total + 1) / 2.0
        ties = np.unique(pooled, return_counts=True)[1]
        tie_term = float(((ties**3 - ties).sum()) / (total * (total - 1))) if total > 1 else 0.0
        sigma2 = n * m / 12.0 * ((total + 1) - tie_term)
        if sigma2 <= 0:
            lower = upper = 1.0
        else:
            sigma = math.sqrt(sigma2)
            lower = 0.5 * math.erfc(-(w - mu + 0.5) / (sigma * math.sqrt(2.0)))
            upper = 0.5 * math.erfc((w - mu - 0.5) / (sigma * math.sqrt(2.0)))

    if alternative == "greater":
        p = upper
    elif alternative == "less":
        p = lower
    else:
        p = min(1.0, 2.0 * min(lower, upper))
    return WilcoxonResult(statistic=w, p_value=float(p), method=method,
                          alpha=alpha, alternative=alternative)


# ---------------------------------------------------------------------------
# CSV reporting


def metrics_rows(dataset: str, scheme: str, folds: list, class_names: list) -> list:
    """Flatten fold metrics into metrics.csv rows (one row per fold+class)."""
    rows = []
    for fm in folds:
        for c, cls in enumerate(class_names):
            rows.append({
                "dataset": dataset,
                "scheme": scheme,
                "fold": fm.fold,
                "class": cls,
                "precision": float(fm.precision[c]),
                "recall": float(fm.recall[c]),
                "iou": float(fm.iou[c]),
                "accuracy": float(fm.accuracy),
            })
    return rows


def write_metrics_csv(path, rows: list):
    """Write metrics rows; float fields use repr so reads round-trip exactly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_CSV_HEADER)
        for row in rows:
            writer.writerow([
                row["dataset"], row["scheme"], row["fold"], row["class"],
                repr(row["precision"]), repr(row["recall"]),
                repr(row["iou"]), repr(row["accuracy"]),
            ])


def read_metrics_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != METRICS_CSV_HEADER:
            raise ValueError(f"{path}: expected header {METRICS_CSV_HEADER}, got {header}")
        for raw in reader:
            rows.append({
                "dataset": raw[0],
                "scheme": raw[1],
                "fold": int(raw[2]),
                "class": raw[3],
                "precision": float(raw[4]),
                "recall": float(raw[5]),
                "iou": float(raw[6]),
                "accuracy": float(raw[7]),
            })
    return rows


def write_stages_csv(path, series: list):
    """Write the plot-ready (stage, mean IoU) series."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STAGES_CSV_HEADER)
        for stage, mean_iou in series:
            writer.writerow([stage, repr(float(mean_iou))])


def read_stages_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != STAGES_CSV_HEADER:
            raise ValueError(f"{path}: expected header {STAGES_CSV_HEADER}, got {header}")
        return [(int(stage), float(iou)) for stage, iou in reader]
