"""Loss, optimizer, and the individual/combined/sequential stage trainers.

A stage trains one network with Adam on categorical cross-entropy until
validation loss stops improving (patience) or the epoch cap is reached.
Merged stages only ever update the freshly introduced branch denses and
classifier; the frozen trunks are run once to cache their feature
vectors, which is mathematically identical because frozen bases execute
in inference mode.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics as metrics_mod
from .model import (
    ClassifierSpec,
    CnnBase,
    MergedNetwork,
    attach_classifier,
    build_base,
    freeze_network,
    merge_combined,
    merge_pair,
    strip_classifier,
)
from .tensor import Tape, Tensor, check_finite

__all__ = [
    "DivergenceError",
    "cross_entropy",
    "Adam",
    "TrainSettings",
    "TrainReport",
    "StageData",
    "fit",
    "evaluate_proba",
    "train_individual",
    "train_combined",
    "train_sequential",
    "SequentialStage",
]

PROB_CLAMP = 1e-7


class DivergenceError(RuntimeError):
    """Training loss became NaN/Inf."""


def cross_entropy(probs: Tensor, labels: np.ndarray, tape: Tape | None = None) -> Tensor:
    """Mean over the batch of -ln p_true, with p clamped to >= 1e-7."""
    labels = np.asarray(labels)
    n, c = probs.shape
    if labels.shape != (n,):
        raise ValueError(f"need {n} labels for a batch of {n}, got shape {labels.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(
            f"label out of range: got {labels.min()}..{labels.max()} for {c} classes"
        )
    picked = probs.data[np.arange(n), labels]
    clamped = np.maximum(picked, PROB_CLAMP)
    out = Tensor(np.mean(-np.log(clamped)))

    if tape is not None:
        def backward(dout):
            dp = np.zeros_like(probs.data)
            live = picked > PROB_CLAMP
            dp[np.arange(n)[live], labels[live]] = -1.0 / (n * clamped[live])
            return (dp * dout,)

        tape.record(out, (probs,), backward)
    return out


class Adam:
    """Adam with bias correction; skips non-trainable parameters entirely."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.99, eps=1e-7):
        self.params = list(params)
        if not any(p.trainable for p in self.params):
            raise ValueError("Adam needs at least one trainable parameter")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self._m, self._v):
            if not p.trainable:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class TrainSettings:
    """Per-stage training hyperparameters (all overridable by config)."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-7
    max_epochs: int = 200
    batch_size: int = 32
    patience: int = 10
    monitor: str = "val_loss"
    restore_best: bool = True

    def __post_init__(self):
        if self.monitor not in ("val_loss", "val_accuracy"):
            raise ValueError(f"monitor must be val_loss or val_accuracy, got {self.monitor!r}")


@dataclass
class TrainReport:
    """Per-epoch history plus why and when training stopped."""

    history: list = field(default_factory=list)
    stopping_reason: str = ""
    epochs_run: int = 0
    best_epoch: int = 0
    wall_time_s: float = 0.0

    @property
    def final_train_loss(self):
        return self.history[-1]["train_loss"] if self.history else None

    @property
    def initial_train_loss(self):
        return self.history[0]["train_loss"] if self.history else None


@dataclass
class StageData:
    """Feature arrays per transform kind for one fold's three subsets."""

    train: dict
    val: dict
    test: dict
    y_train: np.ndarray
    y_val: np.ndarray
    y_test: np.ndarray
    n_classes: int


def _take(inputs, idx):
    if isinstance(inputs, dict):
        return {k: v[idx] for k, v in inputs.items()}
    return inputs[idx]


def _forward(model, batch, tape, mode, precomputed):
    if isinstance(batch, dict):
        return model.forward(batch, tape=tape, mode=mode, precomputed=precomputed)
    return model.forward(batch, tape=tape, mode=mode)


def _n_samples(inputs):
    if isinstance(inputs, dict):
        return len(next(iter(inputs.values())))
    return len(inputs)


def evaluate_proba(model, inputs, batch_size: int = 256, precomputed: bool = False) -> np.ndarray:
    """Batched inference-mode class probabilities."""
    n = _n_samples(inputs)
    chunks = []
    for start in range(0, n, batch_size):
        batch = _take(inputs, slice(start, start + batch_size))
        chunks.append(_forward(model, batch, None, "infer", precomputed).data)
    return np.concatenate(chunks, axis=0)


def _loss_and_accuracy(model, inputs, labels, batch_size, precomputed):
    probs = evaluate_proba(model, inputs, batch_size, precomputed)
    picked = np.maximum(probs[np.arange(len(labels)), labels], PROB_CLAMP)
    loss = float(np.mean(-np.log(picked)))
    accuracy = float(np.mean(probs.argmax(axis=1) == labels))
    return loss, accuracy


def _snapshot(model):
    return {name: p.data.copy() for name, p in model.named_parameters()}


def _restore(model, snapshot):
    for name, p in model.named_parameters():
        p.data = snapshot[name].copy()


def fit(model, train_inputs, train_labels, val_inputs, val_labels,
        settings: TrainSettings, rng: np.random.Generator,
        precomputed: bool = False) -> TrainReport:
    """Train until early stop (no val improvement for `patience` epochs)
    or the epoch cap; optionally restore the best-epoch weights."""
    params = [p for _, p in model.named_parameters()]
    optimizer = Adam(params, lr=settings.lr, beta1=settings.beta1,
                     beta2=settings.beta2, eps=settings.eps)
    n = _n_samples(train_inputs)
    report = TrainReport()
    sign = 1.0 if settings.monitor == "val_loss" else -1.0
    best = np.inf
    best_state = None
    stall = 0
    started = time.perf_counter()

    for epoch in range(1, settings.max_epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        epoch_hits = 0
        for start in range(0, n, settings.batch_size):
            idx = order[start:start + settings.batch_size]
            batch = _take(train_inputs, idx)
            yb = train_labels[idx]
            tape = Tape()
            optimizer.zero_grad()
            probs = _forward(model, batch, tape, "train", precomputed)
            loss = cross_entropy(probs, yb, tape)
            if not np.all(np.isfinite(loss.data)):
                raise DivergenceError(f"loss diverged (non-finite) at epoch {epoch}")
            tape.backward(loss)
            optimizer.step()
            epoch_loss += loss.data.item() * len(idx)
            epoch_hits += int((probs.data.argmax(axis=1) == yb).sum())

        val_loss, val_accuracy = _loss_and_accuracy(
            model, val_inputs, val_labels, settings.batch_size * 8, precomputed
        )
        report.history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / n,
            "train_accuracy": epoch_hits / n,
            "val_loss": val_loss,
            "val_accuracy": val_accuracy,
        })

        monitored = sign * (val_loss if settings.monitor == "val_loss" else val_accuracy)
        if monitored < best:
            best = monitored
            stall = 0
            report.best_epoch = epoch
            if settings.restore_best:
                best_state = _snapshot(model)
        else:
            stall += 1
            if stall > settings.patience:
                report.stopping_reason = "early_stop"
                break
    else:
        report.stopping_reason = "epoch_cap"

    if settings.restore_best and best_state is not None:
        _restore(model, best_state)
    report.epochs_run = len(report.history)
    report.wall_time_s = time.perf_counter() - started
    check_finite(*params, context="trained parameters")
    return report


def _macro_iou(model, inputs, labels, n_classes, precomputed):
    probs = evaluate_proba(model, inputs, precomputed=precomputed)
    cm = metrics_mod.confusion_matrix(probs.argmax(axis=1), labels, n_classes)
    return float(np.mean(metrics_mod.per_class_metrics(cm)["iou"]))


# ---------------------------------------------------------------------------
# stage orchestrators


def train_individual(kind: str, data: StageData, base_spec, classifier_spec: ClassifierSpec,
                     settings: TrainSettings, seed: int):
    """First-stage training of one transform's base plus classifier."""
    rng = np.random.default_rng(seed)
    network = attach_classifier(build_base(base_spec, rng), classifier_spec, rng)
    report = fit(network, data.train[kind], data.y_train,
                 data.val[kind], data.y_val, settings, rng)
    return network, report


def _cache_base_features(bases: dict, data: StageData) -> dict:
    """Run each frozen base once over train/val/test tensors."""
    cache = {}
    for split_name, split in (("train", data.train), ("val", data.val), ("test", data.test)):
        cache[split_name] = {
            kind: evaluate_proba(_BaseOnly(base), split[kind])
            for kind, base in bases.items()
        }
    return cache


class _BaseOnly:
    """Adapter so evaluate_proba can batch a bare base."""

    def __init__(self, base: CnnBase):
        self.base = base

    def forward(self, x, tape=None, mode="infer"):
        return self.base.forward(x, tape, mode)


def train_combined(bases: dict, widths: dict, data: StageData,
                   classifier_spec: ClassifierSpec, settings: TrainSettings, seed: int):
    """Second stage of the two-stage scheme: one joint merge of all bases.

    ``bases`` maps kind -> frozen base (classifier already stripped).
    Only the branch denses and the fresh classifier receive updates.
    """
    rng = np.random.default_rng(seed)
    ordered = [(kind, bases[kind]) for kind in sorted(bases)]
    merged = merge_combined(ordered, widths, classifier_spec, rng)
    feature_cache = _cache_base_features(bases, data)
    report = fit(merged, feature_cache["train"], data.y_train,
                 feature_cache["val"], data.y_val, settings, rng, precomputed=True)
    return merged, report, feature_cache


@dataclass
class SequentialStage:
    """Outcome of one pairwise merge stage."""

    stage: int
    kinds: list
    width_previous: int
    width_incoming: int
    report: TrainReport
    val_iou: float


def train_sequential(bases_ordered: list, pair_widths: list, data: StageData,
                     classifier_spec: ClassifierSpec, settings: TrainSettings,
                     base_seed: int, per_stage_data: list | None = None):
    """Accrete one transform branch per stage (pairwise merges).

    ``bases_ordered`` is a list of (kind, frozen base) sorted by the
    merge-order policy (best individual performance first).  Stage n
    merges the frozen result of stage n-1 with base n, training exactly
    two branch denses plus a fresh classifier.  Per-stage RNG streams
    are ``base_seed ^ stage`` so adding stages never perturbs earlier
    ones.  ``per_stage_data`` supplies a freshly augmented StageData per
    merge stage for re-augmenting runs; by default one set is reused.
    Returns the final merged network, per-stage records, and the base
    feature cache of ``data``.
    """
    if len(bases_ordered) < 2:
        raise ValueError("sequential training needs at least 2 bases")
    if len(pair_widths) != len(bases_ordered) - 1:
        raise ValueError(
            f"{len(bases_ordered)} bases need {len(bases_ordered) - 1} width pairs, "
            f"got {len(pair_widths)}"
        )
    if per_stage_data is not None and len(per_stage_data) != len(bases_ordered) - 1:
        raise ValueError("per_stage_data needs one StageData per merge stage")
    base_map = dict(bases_ordered)
    feature_cache = _cache_base_features(base_map, data)
    previous = bases_ordered[0]
    stages = []
    for stage_index, (kind, base) in enumerate(bases_ordered[1:], start=2):
        if per_stage_data is None:
            cache = feature_cache
            stage_data = data
        else:
            stage_data = per_stage_data[stage_index - 2]
            cache = _cache_base_features(base_map, stage_data)
        stage_seed = base_seed ^ stage_index
        rng = np.random.default_rng(stage_seed)
        if isinstance(previous, MergedNetwork):
            freeze_network(previous)
        w_prev, w_new = pair_widths[stage_index - 2]
        merged = merge_pair(previous, (kind, base), w_prev, w_new, classifier_spec, rng)
        report = fit(merged, cache["train"], stage_data.y_train,
                     cache["val"], stage_data.y_val, settings, rng, precomputed=True)
        val_iou = _macro_iou(merged, cache["val"], stage_data.y_val,
                             stage_data.n_classes, precomputed=True)
        stages.append(SequentialStage(
            stage=stage_index,
            kinds=merged.branch_kinds(),
            width_previous=w_prev,
            width_incoming=w_new,
            report=report,
            val_iou=val_iou,
        ))
        previous = merged
    return previous, stages, feature_cache
