"""Dataset-to-report orchestration: folds, features, stages, outputs.

Ties the pieces together for one run: build or load windows, split them
into stratified folds, carve a validation subset out of each training
fold, augment only the training originals, materialize the transformed
feature tensors, run the requested training scheme, and write
``metrics.csv``, ``stages.csv``, and model files into the output
directory.  Every random draw derives from the config seed, so a run is
bit-reproducible from (config, seed).
"""

from __future__ import annotations

import copy
import json
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .augment import AugmentationConfig, balance_dataset
from .data import (
    DatasetManifest,
    TimeSeriesWindow,
    apply_zscore,
    channel_stats,
    load_canonical_csv,
    load_uci_raw,
    make_folds,
    synth_generate,
)
from .model import (
    ClassifierSpec,
    CnnBaseSpec,
    ResidualBlockSpec,
    allocate_widths,
    default_1d_spec,
    default_2d_spec,
    freeze_network,
    load_network,
    serialize_network,
    strip_classifier,
)
from .training import (
    StageData,
    TrainSettings,
    evaluate_proba,
    train_combined,
    train_individual,
    train_sequential,
)
from .transforms import (
    TRANSFORM_KINDS,
    GafConfig,
    RecurrenceConfig,
    ScatteringConfig,
    transform_window,
)

__all__ = [
    "ConfigError",
    "DEFAULT_CONFIG",
    "resolve_config",
    "load_config_file",
    "build_windows",
    "prepare_fold",
    "run_scheme",
    "evaluate_model_file",
    "RunResult",
]

UCI_CLASS_NAMES = ["walking", "upstairs", "downstairs", "sitting", "standing", "laying"]


class ConfigError(ValueError):
    """A config document contains an unknown or invalid key."""


DEFAULT_CONFIG = {
    "dataset": {
        "kind": "synthetic",
        "name": None,
        "classes": 4,
        "channels": 3,
        "length": 128,
        "windows_per_class": 150,
        "seed": None,  # falls back to training.seed
        "dir": None,  # uci: directory with the raw text layout
        "csv": None,  # csv: canonical long-format file
        "manifest": None,  # csv: manifest json path
    },
    "transforms": ["identity", "scattering", "gaf", "recurrence"],
    "gaf": {"span_constant": None, "paa_segments": None},
    "recurrence": {
        "embedding_dim": 1,
        "delay": 1,
        "threshold": None,
        "paa_segments": None,
    },
    "scattering": {
        "max_order": 2,
        "wavelets_per_octave": 8,
        "octaves": 6,
        "lowpass_scale": None,
    },
    "model": {
        "base_1d": {"filters": None, "kernel_size": 5, "stride": 2},
        "base_2d": {"filters": None, "kernel_size": 3, "stride": 2},
        "classifier_hidden": [128],
    },
    "widths": {
        "table": None,  # explicit kind -> width table overrides the policy
        "total": 240,
        "multiple": 16,
        "floor": 16,
    },
    "sequential": {
        "pairs": None,  # explicit [[w_prev, w_new], ...] overrides the policy
        "total": 256,
        "multiple": 16,
        "floor": 16,
    },
    "training": {
        "seed": 42,
        "lr": 1e-4,
        "beta1": 0.9,
        "beta2": 0.99,
        "eps": 1e-7,
        "max_epochs": 200,
        "batch_size": 32,
        "patience": 10,
        "monitor": "val_loss",
        "restore_best": True,
        "val_fraction": 0.1,
        "re_augment_per_stage": False,
    },
    "augmentation": {
        "enabled": True,
        "jitter_std": None,
        "scale_std": 0.1,
        "n_segments": 4,
        "magwarp_std": 0.2,
        "magwarp_knots": 4,
        "timewarp_std": 0.2,
        "timewarp_knots": 4,
        "balance": True,
        "extra_factor": 0.0,
    },
    "folds": 5,
    "stratified": True,
    "subject_wise": False,
    "jobs": 1,
    "save_individual_models": False,
}


def _merge_config(defaults, user, path=""):
    merged = copy.deepcopy(defaults)
    for key, value in user.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(defaults[key], dict) and defaults[key]:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here} must be an object")
            merged[key] = _merge_config(defaults[key], value, here)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def resolve_config(user: dict | None = None) -> dict:
    """Fill defaults and reject unknown keys (reported with their path)."""
    cfg = _merge_config(DEFAULT_CONFIG, user or {})
    if cfg["dataset"]["seed"] is None:
        cfg["dataset"]["seed"] = cfg["training"]["seed"]
    for kind in cfg["transforms"]:
        if kind not in TRANSFORM_KINDS:
            raise ConfigError(
                f"unknown transform kind {kind!r} in transforms; expected {TRANSFORM_KINDS}"
            )
    if len(set(cfg["transforms"])) != len(cfg["transforms"]):
        raise ConfigError("transforms must not repeat")
    if not cfg["transforms"]:
        raise ConfigError("transforms must not be empty")
    if cfg["folds"] < 2:
        raise ConfigError("folds must be >= 2")
    return cfg


def load_config_file(path) -> dict:
    try:
        user = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top-level config must be a JSON object")
    return resolve_config(user)


def _seed_for(cfg, tag: str, fold: int = 0, extra: int = 0) -> int:
    base = int(cfg["training"]["seed"])
    return (base ^ zlib.crc32(tag.encode()) ^ (fold << 20) ^ extra) & 0x7FFFFFFFFFFFFFFF


# ---------------------------------------------------------------------------
# datasets


def build_windows(cfg):
    """Materialize the configured dataset; returns (windows, class_names, name)."""
    ds = cfg["dataset"]
    kind = ds["kind"]
    if kind == "synthetic":
        windows = synth_generate(
            n_per_class=ds["windows_per_class"], classes=ds["classes"],
            channels=ds["channels"], length=ds["length"], seed=ds["seed"],
        )
        names = [f"class{k}" for k in range(ds["classes"])]
        return windows, names, ds["name"] or "synthetic"
    if kind == "uci":
        if not ds["dir"]:
            raise ConfigError("dataset.dir is required for dataset.kind = uci")
        windows = load_uci_raw(ds["dir"])
        return windows, list(UCI_CLASS_NAMES), ds["name"] or "uci-har"
    if kind == "csv":
        if not ds["csv"] or not ds["manifest"]:
            raise ConfigError("dataset.csv and dataset.manifest are required for kind = csv")
        manifest = DatasetManifest.from_json(ds["manifest"])
        windows = load_canonical_csv(ds["csv"], manifest)
        return windows, list(manifest.class_names), ds["name"] or manifest.name
    raise ConfigError(f"unknown dataset.kind {kind!r}")


def _transform_cfgs(cfg):
    return {
        "identity": None,
        "gaf": GafConfig(**cfg["gaf"]),
        "recurrence": RecurrenceConfig(**cfg["recurrence"]),
        "scattering": ScatteringConfig(**cfg["scattering"]),
    }


def _features(kind, windows, tcfgs, mean, std):
    """Transformed tensors for a window list, stacked along axis 0.

    Identity and scattering consume z-scored channels (train-fold
    statistics); the image transforms normalize internally (the angular
    field min-maxes per window, the recurrence threshold tracks the
    channel's own spread).
    """
    tcfg = tcfgs[kind]
    out = []
    for w in windows:
        if kind in ("identity", "scattering"):
            w = TimeSeriesWindow(
                window_id=w.window_id,
                values=apply_zscore(w.values, mean, std),
                sampling_rate_hz=w.sampling_rate_hz,
                label=w.label, subject=w.subject, source_id=w.source_id,
            )
        out.append(transform_window(w, kind, tcfg).tensor)
    return np.stack(out)


def _stratified_validation_split(windows, fraction, rng):
    by_class = {}
    for w in windows:
        by_class.setdefault(w.label, []).append(w)
    val_ids = set()
    for label in sorted(by_class):
        ids = sorted(x.window_id for x in by_class[label])
        rng.shuffle(ids)
        n_val = max(1, int(round(fraction * len(ids)))) if len(ids) > 1 else 0
        val_ids.update(ids[:n_val])
    train = [w for w in windows if w.window_id not in val_ids]
    val = [w for w in windows if w.window_id in val_ids]
    return train, val


@dataclass
class FoldAudit:
    """Provenance instrumentation for the augmentation firewall."""

    fold: int
    augmented_total: int = 0
    augmented_in_train: int = 0
    augmented_in_val: int = 0
    augmented_in_test: int = 0

    def as_dict(self):
        return dict(self.__dict__)


def prepare_fold(windows, split, fold: int, cfg, n_classes: int,
                 stage_tag: int = 0):
    """Assemble one fold's StageData plus its provenance audit.

    Augmentation (class balancing plus an optional extra rate) draws
    only from the fold's training originals, after the validation subset
    is carved out; validation and test stay original-only.
    ``stage_tag`` perturbs the augmentation stream for per-stage
    re-augmentation runs.
    """
    by_id = {w.window_id: w for w in windows}
    test = [by_id[i] for i in split.test_ids(fold)]
    train_pool = [by_id[i] for i in split.train_ids(fold)]
    rng = np.random.default_rng(_seed_for(cfg, "validation-split", fold))
    train, val = _stratified_validation_split(
        train_pool, cfg["training"]["val_fraction"], rng
    )

    aug = cfg["augmentation"]
    if aug["enabled"]:
        aug_cfg = AugmentationConfig(
            jitter_std=aug["jitter_std"], scale_std=aug["scale_std"],
            n_segments=aug["n_segments"], magwarp_std=aug["magwarp_std"],
            magwarp_knots=aug["magwarp_knots"], timewarp_std=aug["timewarp_std"],
            timewarp_knots=aug["timewarp_knots"],
            seed=_seed_for(cfg, "augmentation", fold, stage_tag),
        )
        counts = {}
        for w in train:
            counts[w.label] = counts.get(w.label, 0) + 1
        target = None
        if aug["extra_factor"] > 0:
            target = int(np.ceil(max(counts.values()) * (1.0 + aug["extra_factor"])))
        elif not aug["balance"]:
            target = 0  # balancing disabled and no extra rate: keep originals only
        if target != 0:
            train = balance_dataset(train, aug_cfg, target_per_class=target)

    audit = FoldAudit(
        fold=fold,
        augmented_total=sum(w.is_augmented for w in train)
        + sum(w.is_augmented for w in val) + sum(w.is_augmented for w in test),
        augmented_in_train=sum(w.is_augmented for w in train),
        augmented_in_val=sum(w.is_augmented for w in val),
        augmented_in_test=sum(w.is_augmented for w in test),
    )

    mean, std = channel_stats([w for w in train if not w.is_augmented])
    tcfgs = _transform_cfgs(cfg)
    kinds = list(cfg["transforms"])
    data = StageData(
        train={k: _features(k, train, tcfgs, mean, std) for k in kinds},
        val={k: _features(k, val, tcfgs, mean, std) for k in kinds},
        test={k: _features(k, test, tcfgs, mean, std) for k in kinds},
        y_train=np.array([w.label for w in train], dtype=np.int64),
        y_val=np.array([w.label for w in val], dtype=np.int64),
        y_test=np.array([w.label for w in test], dtype=np.int64),
        n_classes=n_classes,
    )
    preprocessing = {
        "zscore_mean": [float(v) for v in mean],
        "zscore_std": [float(v) for v in std],
    }
    return data, audit, preprocessing


# ---------------------------------------------------------------------------
# per-fold work


def _base_spec(kind, cfg, feature_shape) -> CnnBaseSpec:
    if len(feature_shape) == 2:
        conf = cfg["model"]["base_1d"]
        filters = conf["filters"]
        if filters is None:
            return default_1d_spec(feature_shape[0], feature_shape[1],
                                   kernel_size=conf["kernel_size"], stride=conf["stride"])
        blocks = tuple(
            ResidualBlockSpec(kernel_size=conf["kernel_size"], filters=f,
                              stride=conf["stride"], dims=1)
            for f in filters
        )
        return CnnBaseSpec(input_shape=tuple(feature_shape), blocks=blocks)
    conf = cfg["model"]["base_2d"]
    filters = conf["filters"]
    if filters is None:
        return default_2d_spec(feature_shape[0], feature_shape[1],
                               kernel_size=conf["kernel_size"], stride=conf["stride"])
    blocks = tuple(
        ResidualBlockSpec(kernel_size=conf["kernel_size"], filters=f,
                          stride=conf["stride"], dims=2)
        for f in filters
    )
    return CnnBaseSpec(input_shape=tuple(feature_shape), blocks=blocks)


def _train_settings(cfg) -> TrainSettings:
    t = cfg["training"]
    return TrainSettings(
        lr=t["lr"], beta1=t["beta1"], beta2=t["beta2"], eps=t["eps"],
        max_epochs=t["max_epochs"], batch_size=t["batch_size"],
        patience=t["patience"], monitor=t["monitor"], restore_best=t["restore_best"],
    )


def _macro_iou_from_probs(probs, labels, n_classes) -> float:
    cm = metrics_mod.confusion_matrix(probs.argmax(axis=1), labels, n_classes)
    return float(np.mean(metrics_mod.per_class_metrics(cm)["iou"]))


@dataclass
class FoldOutcome:
    fold: int
    metrics: metrics_mod.FoldMetrics | None
    individual: dict
    stage_series: list = field(default_factory=list)
    model_blob: bytes | None = None
    individual_blobs: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    per_kind_metrics: dict = field(default_factory=dict)


def _run_fold(windows, split, fold, cfg, scheme, n_classes) -> FoldOutcome:
    data, audit, preprocessing = prepare_fold(windows, split, fold, cfg, n_classes)
    settings = _train_settings(cfg)
    tcfg_dump = {
        "gaf": dict(cfg["gaf"]),
        "recurrence": dict(cfg["recurrence"]),
        "scattering": dict(cfg["scattering"]),
    }
    kinds = list(cfg["transforms"])
    extra_base = {"preprocessing": preprocessing, "transform_configs": tcfg_dump,
                  "n_classes": n_classes}

    classifier_spec = ClassifierSpec(tuple(cfg["model"]["classifier_hidden"]) + (n_classes,))
    outcome = FoldOutcome(fold=fold, metrics=None, individual={}, audit=audit.as_dict())

    # Stage 1: one network per transform kind.
    nets = {}
    for kind in kinds:
        spec = _base_spec(kind, cfg, data.train[kind].shape[1:])
        net, report = train_individual(
            kind, data, spec, classifier_spec, settings,
            seed=_seed_for(cfg, f"individual:{kind}", fold),
        )
        val_probs = evaluate_proba(net, data.val[kind])
        test_probs = evaluate_proba(net, data.test[kind])
        outcome.individual[kind] = {
            "val_iou": _macro_iou_from_probs(val_probs, data.y_val, n_classes),
            "val_accuracy": float(np.mean(val_probs.argmax(1) == data.y_val)),
            "test_accuracy": float(np.mean(test_probs.argmax(1) == data.y_test)),
            "epochs": report.epochs_run,
            "stopping_reason": report.stopping_reason,
        }
        outcome.per_kind_metrics[kind] = metrics_mod.fold_metrics(
            fold, test_probs.argmax(1), data.y_test, n_classes
        )
        nets[kind] = net
        if cfg["save_individual_models"]:
            outcome.individual_blobs[kind] = serialize_network(
                net, extra={**extra_base, "kinds": [kind]}
            )
        outcome.reports[f"individual:{kind}"] = {
            "epochs": report.epochs_run, "stopping_reason": report.stopping_reason,
            "wall_time_s": report.wall_time_s,
        }

    best_indiv_iou = max(v["val_iou"] for v in outcome.individual.values())
    outcome.stage_series.append((1, best_indiv_iou))

    if scheme == "individual":
        return outcome

    bases = {kind: freeze_network(strip_classifier(net)) for kind, net in nets.items()}
    iou_by_kind = {k: outcome.individual[k]["val_iou"] for k in kinds}

    if scheme == "two-stage":
        wcfg = cfg["widths"]
        if wcfg["table"] is not None:
            widths = dict(wcfg["table"])
        else:
            widths = allocate_widths(iou_by_kind, total=wcfg["total"],
                                     multiple=wcfg["multiple"], floor=wcfg["floor"])
        merged, report, cache = train_combined(
            bases, widths, data, classifier_spec, settings,
            seed=_seed_for(cfg, "combined", fold),
        )
        val_probs = evaluate_proba(merged, cache["val"], precomputed=True)
        outcome.stage_series.append(
            (2, _macro_iou_from_probs(val_probs, data.y_val, n_classes))
        )
        test_probs = evaluate_proba(merged, cache["test"], precomputed=True)
        outcome.metrics = metrics_mod.fold_metrics(
            fold, test_probs.argmax(1), data.y_test, n_classes
        )
        outcome.model_blob = serialize_network(
            merged, extra={**extra_base, "kinds": kinds, "widths": widths}
        )
        outcome.reports["combined"] = {
            "epochs": report.epochs_run, "stopping_reason": report.stopping_reason,
            "wall_time_s": report.wall_time_s,
        }
        return outcome

    if scheme == "sequential":
        order = sorted(kinds, key=lambda k: (-iou_by_kind[k], k))
        scfg = cfg["sequential"]
        if scfg["pairs"] is not None:
            pairs = [tuple(p) for p in scfg["pairs"]]
        else:
            pairs = []
            for i in range(1, len(order)):
                prev_score = max(iou_by_kind[k] for k in order[:i])
                alloc = allocate_widths(
                    {"previous": prev_score, "incoming": iou_by_kind[order[i]]},
                    total=scfg["total"], multiple=scfg["multiple"], floor=scfg["floor"],
                )
                pairs.append((alloc["previous"], alloc["incoming"]))

        per_stage_data = None
        if cfg["training"]["re_augment_per_stage"]:
            per_stage_data = [
                prepare_fold(windows, split, fold, cfg, n_classes, stage_tag=n)[0]
                for n in range(2, len(order) + 1)
            ]
        merged, stages, cache = train_sequential(
            [(k, bases[k]) for k in order], pairs, data, classifier_spec, settings,
            base_seed=_seed_for(cfg, "sequential", fold),
            per_stage_data=per_stage_data,
        )
        for st in stages:
            outcome.stage_series.append((st.stage, st.val_iou))
            outcome.reports[f"stage{st.stage}"] = {
                "epochs": st.report.epochs_run,
                "stopping_reason": st.report.stopping_reason,
                "wall_time_s": st.report.wall_time_s,
                "kinds": st.kinds,
                "widths": [st.width_previous, st.width_incoming],
            }
        test_probs = evaluate_proba(merged, cache["test"], precomputed=True)
        outcome.metrics = metrics_mod.fold_metrics(
            fold, test_probs.argmax(1), data.y_test, n_classes
        )
        outcome.model_blob = serialize_network(
            merged, extra={**extra_base, "kinds": kinds, "pairs": [list(p) for p in pairs],
                           "order": order}
        )
        return outcome

    raise ConfigError(f"unknown scheme {scheme!r}")


# ---------------------------------------------------------------------------
# run drivers


@dataclass
class RunResult:
    scheme: str
    dataset: str
    class_names: list
    fold_metrics: list
    per_kind_fold_metrics: dict
    stage_series: list
    audits: list
    aggregates: dict
    out_dir: str | None
    individual: list


def _fold_worker(payload):
    windows, split, fold, cfg, scheme, n_classes = payload
    return _run_fold(windows, split, fold, cfg, scheme, n_classes)


def run_scheme(cfg: dict, scheme: str, out_dir=None, folds=None) -> RunResult:
    """Run a full cross-validated scheme and write its artifacts.

    ``folds`` restricts execution to the listed fold indices (all by
    default).  Fold-level parallelism follows cfg["jobs"]; results are
    aggregated in fold order either way.
    """
    started = time.perf_counter()
    windows, class_names, dataset_name = build_windows(cfg)
    n_classes = len(class_names)
    split = make_folds(
        windows, k=cfg["folds"], seed=_seed_for(cfg, "folds"),
        stratify_by_class=cfg["stratified"], subject_wise=cfg["subject_wise"],
    )
    fold_list = list(range(cfg["folds"])) if folds is None else list(folds)
    payloads = [(windows, split, f, cfg, scheme, n_classes) for f in fold_list]

    if cfg["jobs"] > 1 and len(fold_list) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            outcomes = list(pool.map(_fold_worker, payloads))
    else:
        outcomes = [_fold_worker(p) for p in payloads]

    outcomes.sort(key=lambda o: o.fold)
    fold_metrics = [o.metrics for o in outcomes if o.metrics is not None]
    per_kind = {}
    for kind in cfg["transforms"]:
        per_kind[kind] = [o.per_kind_metrics[kind] for o in outcomes]

    n_stages = max(len(o.stage_series) for o in outcomes)
    stage_series = []
    for i in range(n_stages):
        stage_ids = {o.stage_series[i][0] for o in outcomes}
        mean_iou = float(np.mean([o.stage_series[i][1] for o in outcomes]))
        stage_series.append((stage_ids.pop(), mean_iou))

    aggregates = {}
    if fold_metrics:
        aggregates[scheme] = {
            name: {"mean": mu, "std": sd}
            for name, (mu, sd) in metrics_mod.aggregate_folds(fold_metrics).items()
        }
    for kind in cfg["transforms"]:
        aggregates[f"individual-{kind}"] = {
            name: {"mean": mu, "std": sd}
            for name, (mu, sd) in metrics_mod.aggregate_folds(per_kind[kind]).items()
        }

    result = RunResult(
        scheme=scheme,
        dataset=dataset_name,
        class_names=class_names,
        fold_metrics=fold_metrics,
        per_kind_fold_metrics=per_kind,
        stage_series=stage_series,
        audits=[o.audit for o in outcomes],
        aggregates=aggregates,
        out_dir=str(out_dir) if out_dir else None,
        individual=[o.individual for o in outcomes],
    )

    if out_dir is not None:
        out = Path(out_dir)
        (out / "models").mkdir(parents=True, exist_ok=True)
        rows = []
        if fold_metrics:
            rows.extend(metrics_mod.metrics_rows(dataset_name, scheme, fold_metrics, class_names))
        for kind in cfg["transforms"]:
            rows.extend(metrics_mod.metrics_rows(
                dataset_name, f"individual-{kind}", per_kind[kind], class_names
            ))
        metrics_mod.write_metrics_csv(out / "metrics.csv", rows)
        metrics_mod.write_stages_csv(out / "stages.csv", stage_series)
        for o in outcomes:
            if o.model_blob is not None:
                (out / "models" / f"fold{o.fold}-{scheme}.msth").write_bytes(o.model_blob)
            for kind, blob in o.individual_blobs.items():
                (out / "models" / f"fold{o.fold}-individual-{kind}.msth").write_bytes(blob)
        run_info = {
            "scheme": scheme,
            "dataset": dataset_name,
            "class_names": class_names,
            "config": cfg,
            "aggregates": aggregates,
            "stage_series": [[s, v] for s, v in stage_series],
            "audits": [o.audit for o in outcomes],
            "reports": {str(o.fold): o.reports for o in outcomes},
            "wall_time_s": time.perf_counter() - started,
        }
        (out / "run.json").write_text(json.dumps(run_info, indent=2, sort_keys=True))
    return result


def evaluate_model_file(model_path, cfg: dict, out_dir=None, scheme_label="evaluate"):
    """Apply a saved model to the configured dataset and report metrics."""
    network, extra = load_network(model_path)
    if extra is None or "kinds" not in extra:
        raise ConfigError(f"{model_path}: model file lacks evaluation metadata")
    windows, class_names, dataset_name = build_windows(cfg)
    n_classes = extra["n_classes"]
    mean = np.asarray(extra["preprocessing"]["zscore_mean"])
    std = np.asarray(extra["preprocessing"]["zscore_std"])
    tdump = extra["transform_configs"]
    tcfgs = {
        "identity": None,
        "gaf": GafConfig(**tdump["gaf"]),
        "recurrence": RecurrenceConfig(**tdump["recurrence"]),
        "scattering": ScatteringConfig(**tdump["scattering"]),
    }
    kinds = extra["kinds"]
    features = {k: _features(k, windows, tcfgs, mean, std) for k in kinds}
    labels = np.array([w.label for w in windows], dtype=np.int64)
    if len(kinds) == 1 and not hasattr(network, "group"):
        probs = evaluate_proba(network, features[kinds[0]])
    else:
        probs = evaluate_proba(network, features)
    fm = metrics_mod.fold_metrics(0, probs.argmax(1), labels, n_classes)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = metrics_mod.metrics_rows(dataset_name, scheme_label, [fm], class_names)
        metrics_mod.write_metrics_csv(out / "metrics.csv", rows)
    return fm, class_names
