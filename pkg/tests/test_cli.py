"""Command-line surface tests."""

import json

import numpy as np
import pytest

from msthar.cli import run_cli
from msthar.data import DatasetManifest, load_canonical_csv
from msthar.metrics import read_metrics_csv

TINY_CONFIG = {
    "dataset": {"classes": 2, "channels": 2, "length": 64, "windows_per_class": 12},
    "transforms": ["identity", "gaf"],
    "gaf": {"paa_segments": 16},
    "model": {"base_1d": {"filters": [4, 8]}, "base_2d": {"filters": [4, 8]},
              "classifier_hidden": [8]},
    "widths": {"total": 16, "multiple": 8, "floor": 8},
    "sequential": {"total": 16, "multiple": 8, "floor": 8},
    "training": {"max_epochs": 2, "batch_size": 8, "seed": 3, "lr": 1e-3},
    "folds": 2,
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return path


def test_help_exits_zero(capsys):
    assert run_cli(["--help"]) == 0
    assert "usage" in capsys.readouterr().out


def test_unknown_flag_exits_nonzero_with_usage(capsys):
    code = run_cli(["synth", "--bogus-flag"])
    assert code != 0
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand_exits_nonzero(capsys):
    assert run_cli([]) != 0


def test_invalid_config_key_names_the_key(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"training": {"learning_rate": 1.0}}))
    code = run_cli(["synth", "--config", str(bad), "--out", str(tmp_path / "out")])
    assert code == 2
    assert "training.learning_rate" in capsys.readouterr().err


def test_synth_writes_csv_and_manifest(tmp_path, tiny_config, capsys):
    out = tmp_path / "synth"
    assert run_cli(["synth", "--config", str(tiny_config), "--out", str(out)]) == 0
    manifest = DatasetManifest.from_json(out / "manifest.json")
    windows = load_canonical_csv(out / "synth.csv", manifest)
    assert len(windows) == 24
    assert manifest.n_classes == 2


def test_transform_writes_npz_per_kind(tmp_path, tiny_config):
    out = tmp_path / "transformed"
    assert run_cli(["transform", "--config", str(tiny_config), "--out", str(out)]) == 0
    gaf = np.load(out / "synthetic-gaf.npz")
    assert gaf["tensors"].shape == (24, 2, 16, 16)
    assert gaf["labels"].shape == (24,)


def test_augment_writes_balanced_csv(tmp_path):
    config = dict(TINY_CONFIG)
    config["dataset"] = {**TINY_CONFIG["dataset"], "windows_per_class": [8, 4]}
    config["dataset"]["classes"] = 2
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    out = tmp_path / "aug"
    assert run_cli(["augment", "--config", str(path), "--out", str(out)]) == 0
    manifest = DatasetManifest.from_json(out / "manifest.json")
    windows = load_canonical_csv(out / "augmented.csv", manifest)
    counts = {}
    for w in windows:
        counts[w.label] = counts.get(w.label, 0) + 1
    assert counts == {0: 8, 1: 8}


def test_two_stage_training_writes_model_and_metrics(tmp_path, tiny_config, capsys):
    out = tmp_path / "run"
    code = run_cli(["train-two-stage", "--config", str(tiny_config), "--out", str(out)])
    assert code == 0
    assert (out / "metrics.csv").is_file()
    assert (out / "stages.csv").is_file()
    assert any(p.suffix == ".msth" for p in (out / "models").iterdir())
    printed = capsys.readouterr().out
    assert "two-stage" in printed and "stage 2" in printed


def test_evaluate_applies_saved_model(tmp_path, tiny_config):
    run_dir = tmp_path / "run"
    assert run_cli(["train-two-stage", "--config", str(tiny_config),
                    "--out", str(run_dir)]) == 0
    model = next((run_dir / "models").glob("*.msth"))
    out = tmp_path / "eval"
    assert run_cli(["evaluate", "--config", str(tiny_config), "--model", str(model),
                    "--out", str(out)]) == 0
    rows = read_metrics_csv(out / "metrics.csv")
    assert rows and all(r["scheme"] == "evaluate" for r in rows)


def test_report_aggregates_runs(tmp_path, tiny_config, capsys):
    run_dir = tmp_path / "run"
    assert run_cli(["train-two-stage", "--config", str(tiny_config),
                    "--out", str(run_dir)]) == 0
    capsys.readouterr()
    out = tmp_path / "report"
    assert run_cli(["report", str(run_dir), "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "two-stage" in printed
    assert (out / "metrics.csv").is_file()


def test_report_missing_metrics_is_an_error(tmp_path, capsys):
    assert run_cli(["report", str(tmp_path)]) == 2
    assert "metrics.csv" in capsys.readouterr().err


def test_seed_flag_overrides_config(tmp_path, tiny_config):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert run_cli(["synth", "--config", str(tiny_config), "--seed", "11",
                    "--out", str(out_a)]) == 0
    assert run_cli(["synth", "--config", str(tiny_config), "--seed", "12",
                    "--out", str(out_b)]) == 0
    assert (out_a / "synth.csv").read_text() != (out_b / "synth.csv").read_text()
