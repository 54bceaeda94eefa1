"""
Tests for the t1 command line and config resolution
"""

import json
import os

import pandas as pd
import pytest
import yaml

from src.experiments import config_hash, dump_config, resolve_config
from src.main import EXIT_CONFIG, EXIT_OK, main


@pytest.fixture(autouse=True)
def log_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("T1_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("T1_MAX_WORKERS", "1")


def write_config(tmp_path, payload, name="experiment.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(payload), encoding="utf-8")
    return str(path)


SMALL_TRACK = {
    "budget": {"n_shots": 8, "repetitions": 6},
    "moving_window": 3,
}

SMALL_OPT_TAU = {
    "opt_tau": {"t1_grid_s": [100e-6, 200e-6], "idle_grid_s": [0.0, 23.2e-6], "curve_points": 5},
}


def read_outputs(directory):
    return {name: (directory / name).read_bytes() for name in sorted(os.listdir(directory))}


def test_track_is_reproducible(tmp_path):
    config = write_config(tmp_path, SMALL_TRACK)
    first, second = tmp_path / "a", tmp_path / "b"

    assert main(["track", "--config", config, "--seed", "5", "--out", str(first), "--quiet"]) == EXIT_OK
    assert main(["track", "--config", config, "--seed", "5", "--out", str(second), "--quiet"]) == EXIT_OK

    outputs = read_outputs(first)
    assert {"trace.csv", "shots.csv", "moving_mean.csv", "truth.csv", "track.json",
            "config.resolved.yaml"} <= set(outputs)
    assert outputs == read_outputs(second)


def test_seed_changes_track_output(tmp_path):
    config = write_config(tmp_path, SMALL_TRACK)
    main(["track", "--config", config, "--seed", "1", "--out", str(tmp_path / "a"), "--quiet"])
    main(["track", "--config", config, "--seed", "2", "--out", str(tmp_path / "b"), "--quiet"])
    assert (tmp_path / "a" / "shots.csv").read_bytes() != (tmp_path / "b" / "shots.csv").read_bytes()


def test_outputs_carry_config_hash(tmp_path):
    config = write_config(tmp_path, SMALL_TRACK)
    out = tmp_path / "run"
    assert main(["track", "--config", config, "--out", str(out), "--quiet"]) == EXIT_OK

    report = json.loads((out / "track.json").read_text(encoding="utf-8"))
    digest = report["_meta"]["config_hash"]
    assert len(digest) == 64
    assert (out / "trace.csv").read_text(encoding="utf-8").splitlines()[0] == f"# config_hash: {digest}"
    assert report["repetitions"] == 6


def test_opt_tau_writes_tables(tmp_path):
    config = write_config(tmp_path, SMALL_OPT_TAU)
    out = tmp_path / "opt"
    assert main(["opt-tau", "--config", config, "--out", str(out), "--quiet"]) == EXIT_OK

    report = json.loads((out / "opt_tau.json").read_text(encoding="utf-8"))
    assert 0.0 < report["c_at_idle"]["0us"] < report["c_at_idle"]["23.2us"] < 1.5937
    for name in ("c_table.csv", "tau_opt_curve.csv", "closed_forms.csv"):
        assert (out / name).exists()


def test_unknown_command_is_a_usage_error():
    assert main(["teleport"]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["track", "--config", str(tmp_path / "absent.yaml"), "--out", str(tmp_path), "--quiet"]) == EXIT_CONFIG


def test_invalid_config_values(tmp_path):
    unknown = write_config(tmp_path, {"budget": {"shots": 10}}, "unknown.yaml")
    assert main(["track", "--config", unknown, "--out", str(tmp_path / "x"), "--quiet"]) == EXIT_CONFIG

    too_large_c = write_config(tmp_path, {"policy": {"c": 2.0}}, "large_c.yaml")
    assert main(["track", "--config", too_large_c, "--out", str(tmp_path / "y"), "--quiet"]) == EXIT_CONFIG


def test_inverted_ensemble_range_is_a_config_error(tmp_path):
    ensemble = {"count": 5, "gamma_min_per_s": 10.0, "gamma_max_per_s": 0.1, "delta_gamma_per_s": 100.0}
    config = write_config(tmp_path, {"simulator": {"ensemble": ensemble}})
    assert main(["track", "--config", config, "--out", str(tmp_path / "x"), "--quiet"]) == EXIT_CONFIG


def test_unknown_preset(tmp_path):
    assert main(["track", "--preset", "nope", "--out", str(tmp_path), "--quiet"]) == EXIT_CONFIG


def test_resolution_order(tmp_path):
    config = write_config(tmp_path, {"preset": "fig1f", "seed": 3, "budget": {"n_shots": 12}})
    resolved = resolve_config(config_file=config, seed=9, out=str(tmp_path / "out"))

    assert resolved.preset == "fig1f"
    assert resolved.seed == 9
    assert resolved.budget.n_shots == 12
    assert resolved.output_dir == str(tmp_path / "out")


def test_config_hash_ignores_output_dir(tmp_path):
    config = write_config(tmp_path, SMALL_TRACK)
    a = resolve_config(config_file=config, out=str(tmp_path / "a"))
    b = resolve_config(config_file=config, out=str(tmp_path / "b"))
    c = resolve_config(config_file=config, out=str(tmp_path / "a"), seed=1)

    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)
    assert "output_dir" not in dump_config(a)


def test_resolved_config_round_trips(tmp_path):
    config = write_config(tmp_path, SMALL_TRACK)
    out = tmp_path / "run"
    main(["track", "--config", config, "--out", str(out), "--quiet"])

    saved = yaml.safe_load((out / "config.resolved.yaml").read_text(encoding="utf-8"))
    reloaded = resolve_config(config_file=write_config(tmp_path, saved, "saved.yaml"), out=str(out))
    original = resolve_config(config_file=config, out=str(out))
    assert config_hash(reloaded) == config_hash(original)


def test_interleave_with_zero_repetitions(tmp_path):
    config = write_config(tmp_path, {"budget": {"repetitions": 0}})
    out = tmp_path / "inter"
    assert main(["interleave", "--config", config, "--out", str(out), "--quiet"]) == EXIT_OK

    report = json.loads((out / "interleave.json").read_text(encoding="utf-8"))
    assert report["repetitions"] == 0
    assert report["sweep_fit"] is None
    assert not report["agree"]
    assert pd.read_csv(out / "interleave_adaptive.csv", comment="#").empty


def test_telegraph_preset_trace_is_bimodal(tmp_path):
    config = write_config(tmp_path, {"budget": {"repetitions": 200}, "seed": 4})
    out = tmp_path / "telegraph"
    assert main(["track", "--preset", "fig2_track", "--config", config, "--out", str(out), "--quiet"]) == EXIT_OK

    t1_hat = pd.read_csv(out / "trace.csv", comment="#")["t1_hat_s"]
    assert (t1_hat < 200e-6).mean() > 0.2
    assert (t1_hat > 350e-6).mean() > 0.2
