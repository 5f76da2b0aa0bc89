"""Acceptance suite: one test per release criterion, with stated budgets.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line
per criterion.  The heavyweight end-to-end fixture (four individual
networks, the combined merge, and the pairwise merges on the pinned
synthetic dataset) is built once per session in conftest.
"""

import time

import numpy as np
import pytest

import msthar.pipeline as pipeline
from msthar.augment import AugmentationConfig, compose_all_five, permute_segments, time_warp
from msthar.metrics import confusion_matrix, per_class_metrics, wilcoxon_rank_sum
from msthar.model import tensor_hashes
from msthar.transforms import (
    RecurrenceConfig,
    ScatteringConfig,
    gaf_transform,
    recurrence_plot,
    scattering_transform,
)
from test_metrics import (
    SIX_CLASS_COUNTS,
    enumeration_rank_sum_p,
    labels_predictions_from_counts,
)
from test_tensor_ops import GRAD_CASES, _gradcheck


def test_c01_transform_oracles():
    started = time.perf_counter()
    rng = np.random.default_rng(101)

    # Angular-field symmetry and diagonal identity at 1e-12.
    for _ in range(300):
        series = rng.uniform(-5.0, 5.0, rng.integers(8, 64))
        matrix = gaf_transform(series)
        assert np.abs(matrix - matrix.T).max() <= 1e-12
        lo, hi = series.min(), series.max()
        scaled = (2 * series - hi - lo) / (hi - lo)
        assert np.abs(np.diag(matrix) - (2 * scaled**2 - 1)).max() <= 1e-12

    # Recurrence plots equal an explicit brute-force loop on 200 windows.
    for _ in range(200):
        length = int(rng.integers(16, 33))
        x = rng.normal(size=length)
        m = int(rng.integers(1, 4))
        delay = int(rng.integers(1, 3))
        eps = float(rng.uniform(0.1, 2.0))
        got = recurrence_plot(x, RecurrenceConfig(embedding_dim=m, delay=delay,
                                                  threshold=eps))
        n_states = length - (m - 1) * delay
        for i in range(n_states):
            for j in range(n_states):
                dist = 0.0
                for q in range(m):
                    diff = x[i + q * delay] - x[j + q * delay]
                    dist += diff * diff
                expected = 1.0 if dist**0.5 <= eps else 0.0
                assert got[i, j] == expected

    # Scattering: zero input is exactly zero; a constant input produces
    # only the lowpass response (zero-mean wavelets), within 1e-3.
    cfg = ScatteringConfig()
    assert np.array_equal(scattering_transform(np.zeros(128), cfg),
                          np.zeros(scattering_transform(np.zeros(128), cfg).shape))
    c = 3.7
    coeffs = scattering_transform(np.full(128, c), cfg)
    per_path = 128 // cfg.resolved_lowpass()
    assert np.abs(coeffs[:per_path] - c).max() / c < 1e-3
    assert np.abs(coeffs[per_path:]).max() / c < 1e-3

    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"transform oracles took {elapsed:.1f}s"
    print(f"\nACCEPTANCE 01 transform-oracles: PASS ({elapsed:.1f}s)")


def test_c02_gradient_suite():
    started = time.perf_counter()
    for name, case in sorted(GRAD_CASES.items()):
        rng = np.random.default_rng(abs(hash("acceptance-" + name)) % (2**32))
        for _ in range(20):
            forward, arrays = case(rng)
            _gradcheck(forward, arrays, tol=1e-6, h=1e-5)
    elapsed = time.perf_counter() - started
    assert elapsed < 120.0, f"gradient suite took {elapsed:.1f}s"
    print(f"\nACCEPTANCE 02 gradient-suite: PASS "
          f"({len(GRAD_CASES)} ops x 20 configs, {elapsed:.1f}s)")


def test_c03_freezing_bit_identity(synth_run):
    for kind, base in synth_run["bases"].items():
        assert tensor_hashes(base) == synth_run["hashes_after_stage1"][kind], (
            f"frozen base for {kind!r} changed during the merge stage"
        )
    print("\nACCEPTANCE 03 freezing-bit-identity: PASS "
          f"({sum(len(h) for h in synth_run['hashes_after_stage1'].values())} tensors)")


def test_c04_end_to_end_synthetic(synth_run):
    accuracies = {k: v["test_accuracy"] for k, v in synth_run["individual"].items()}
    for kind, accuracy in accuracies.items():
        assert accuracy >= 0.90, f"individual {kind} network reached only {accuracy:.3f}"
    for kind, record in synth_run["individual"].items():
        report = record["report"]
        assert report.final_train_loss < report.initial_train_loss, kind
        assert report.stopping_reason in ("early_stop", "epoch_cap")
    combined = synth_run["combined_report"]
    assert combined.final_train_loss < combined.initial_train_loss
    merged_accuracy = synth_run["two_stage_test_accuracy"]
    assert merged_accuracy >= max(accuracies.values()) - 0.02, (
        f"merged {merged_accuracy:.3f} vs best individual {max(accuracies.values()):.3f}"
    )
    elapsed = synth_run["two_stage_elapsed_s"]
    assert elapsed < 900.0, f"end-to-end two-stage run took {elapsed:.0f}s"
    rendered = ", ".join(f"{k}={v:.3f}" for k, v in sorted(accuracies.items()))
    print(f"\nACCEPTANCE 04 end-to-end-synthetic: PASS "
          f"({rendered}; merged={merged_accuracy:.3f}; {elapsed:.0f}s)")


def test_c05_sequential_stage_monotonicity(synth_run):
    series = [max(v["val_iou"] for v in synth_run["individual"].values())]
    series.extend(stage.val_iou for stage in synth_run["sequential_stages"])
    for i in range(len(series) - 1):
        assert series[i + 1] >= series[i] - 0.02, (
            f"stage {i + 2} IoU {series[i + 1]:.4f} dropped more than 0.02 below "
            f"stage {i + 1} IoU {series[i]:.4f}"
        )
    rendered = " -> ".join(f"{v:.4f}" for v in series)
    print(f"\nACCEPTANCE 05 sequential-monotonicity: PASS ({rendered})")


def test_c06_metrics_reproduction():
    predictions, labels = labels_predictions_from_counts(SIX_CLASS_COUNTS)
    cm = confusion_matrix(predictions, labels, 6)
    assert np.array_equal(cm, SIX_CLASS_COUNTS), "confusion matrix mismatch"
    per = per_class_metrics(cm)
    assert per["precision"][0] == 466 / 473
    assert per["iou"][5] == 1.0
    print("\nACCEPTANCE 06 metrics-reproduction: PASS "
          f"(precision[walk]={466}/{473}, iou[lay]=1.0)")


def test_c07_wilcoxon_exactness():
    rng = np.random.default_rng(107)
    checked = 0
    while checked < 1000:
        n = int(rng.integers(1, 10))
        m = int(rng.integers(1, 11 - n))
        a = rng.integers(0, 6, n).astype(float)
        b = rng.integers(0, 6, m).astype(float)
        result = wilcoxon_rank_sum(a, b)
        assert result.method == "exact"
        assert abs(result.p_value - enumeration_rank_sum_p(a, b)) <= 1e-12
        checked += 1
    print(f"\nACCEPTANCE 07 wilcoxon-exactness: PASS ({checked} sample pairs)")


def test_c08_augmentation_identities():
    rng = np.random.default_rng(108)
    neutral = AugmentationConfig().neutral()
    failures = 0
    for i in range(1000):
        channels = int(rng.integers(1, 4))
        n_segments = int(rng.integers(1, 6))
        # equal-size segments keep output boundaries known without
        # replaying the permutation draw
        length = n_segments * int(rng.integers(4, 17))
        values = rng.normal(size=(channels, length))

        out = compose_all_five(values, neutral, np.random.default_rng(i))
        if out.tobytes() != values.tobytes():
            failures += 1

        permuted = permute_segments(values, n_segments, np.random.default_rng(i))
        segments = np.array_split(np.arange(length), n_segments)
        original = sorted(values[:, s].tobytes() for s in segments)
        shuffled = sorted(permuted[:, s].tobytes() for s in segments)
        if original != shuffled:
            failures += 1

        warped = time_warp(values, 0.3, 4, np.random.default_rng(i))
        if warped.shape != values.shape:
            failures += 1
    assert failures == 0, f"{failures} augmentation identity failures"
    print("\nACCEPTANCE 08 augmentation-identities: PASS (1000 windows, 0 failures)")


DETERMINISM_CONFIG = {
    "dataset": {"classes": 4, "channels": 3, "length": 128, "windows_per_class": 25,
                "seed": 42},
    "transforms": ["identity", "scattering", "gaf", "recurrence"],
    "gaf": {"paa_segments": 32},
    "recurrence": {"paa_segments": 32},
    "scattering": {"wavelets_per_octave": 4},
    "model": {"base_1d": {"filters": [8, 16]}, "base_2d": {"filters": [4, 8]},
              "classifier_hidden": [16]},
    "sequential": {"total": 32, "multiple": 8, "floor": 8},
    "widths": {"total": 32, "multiple": 8, "floor": 8},
    "training": {"seed": 42, "max_epochs": 4, "batch_size": 32, "lr": 1e-3},
    "augmentation": {"extra_factor": 0.2},
    "folds": 2,
}


def test_c09_sequential_run_determinism(tmp_path_factory):
    cfg = pipeline.resolve_config(DETERMINISM_CONFIG)
    outputs = []
    for label in ("first", "second"):
        out = tmp_path_factory.mktemp(f"determinism-{label}")
        pipeline.run_scheme(cfg, "sequential", out_dir=out)
        models = {
            p.name: p.read_bytes() for p in sorted((out / "models").iterdir())
        }
        outputs.append({
            "metrics": (out / "metrics.csv").read_bytes(),
            "stages": (out / "stages.csv").read_bytes(),
            "models": models,
        })
    assert outputs[0]["metrics"] == outputs[1]["metrics"], "metrics.csv differs"
    assert outputs[0]["stages"] == outputs[1]["stages"], "stages.csv differs"
    assert outputs[0]["models"].keys() == outputs[1]["models"].keys()
    for name in outputs[0]["models"]:
        assert outputs[0]["models"][name] == outputs[1]["models"][name], (
            f"model file {name} differs between identical runs"
        )
    print(f"\nACCEPTANCE 09 determinism: PASS "
          f"(metrics.csv + {len(outputs[0]['models'])} model files byte-identical)")


FIREWALL_CONFIG = {
    "dataset": {"classes": 4, "channels": 2, "length": 64,
                "windows_per_class": [40, 28, 20, 12], "seed": 7},
    "transforms": ["identity"],
    "scattering": {"octaves": 4},
    "model": {"base_1d": {"filters": [4, 8]}, "classifier_hidden": [8]},
    "training": {"seed": 7, "max_epochs": 1, "batch_size": 32, "lr": 1e-3},
    "augmentation": {"extra_factor": 0.3},
    "folds": 5,
}


def test_c10_augmentation_firewall(tmp_path_factory):
    cfg = pipeline.resolve_config(FIREWALL_CONFIG)
    out = tmp_path_factory.mktemp("firewall")
    result = pipeline.run_scheme(cfg, "individual", out_dir=out)
    assert len(result.audits) == 5
    leaked = 0
    produced = 0
    for audit in result.audits:
        leaked += audit["augmented_in_test"] + audit["augmented_in_val"]
        produced += audit["augmented_in_train"]
    assert produced > 0, "firewall audit is vacuous: no augmented samples produced"
    assert leaked == 0, f"{leaked} augmented samples leaked into validation/test folds"
    print(f"\nACCEPTANCE 10 augmentation-firewall: PASS "
          f"({produced} augmented samples, 0 outside training folds)")
