import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from matnet.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    cfg = out / "gen.json"
    cfg.write_text(json.dumps({"n_steps": 20, "seed": 3}))
    assert main(["make-synthetic", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def test_make_synthetic_outputs(synth):
    for name in ("network.json", "pvt.csv", "relperm.csv", "history.csv", "forecast.csv",
                 "observations.csv", "truth.json", "truth_pressures.csv", "manifest.json",
                 "simulate.json", "forecast.json", "history_match.json"):
        assert (synth / name).exists(), name
    manifest = json.loads((synth / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["status"] == "ok"
    assert "history.csv" in manifest["outputs"]


def test_simulate_reproduces_truth(synth, tmp_path):
    assert main(["simulate", "--config", str(synth / "simulate.json"), "--out", str(tmp_path)]) == 0
    sim = pd.read_csv(tmp_path / "pressures.csv")
    truth = pd.read_csv(synth / "truth_pressures.csv")
    merged = truth.merge(sim, on=["time", "block"], suffixes=("_t", "_s"))
    assert len(merged) == len(truth)
    np.testing.assert_allclose(merged.p_s, merged.p_t, rtol=1e-10)
    assert (tmp_path / "fluxes.csv").exists() and (tmp_path / "manifest.json").exists()


def test_forecast_runs_past_history(synth, tmp_path):
    assert main(["forecast", "--config", str(synth / "forecast.json"), "--out", str(tmp_path)]) == 0
    fc = pd.read_csv(tmp_path / "forecast.csv")
    hist = pd.read_csv(synth / "history.csv")
    assert len(fc) > 0 and fc.time.min() > hist.time.max()


def test_blind_test_zero_fraction(synth, tmp_path, capsys):
    code = main(["forecast", "--config", str(synth / "forecast.json"), "--out", str(tmp_path),
                 "--blind-test", "0"])
    assert code == 0
    assert "no masked steps" in capsys.readouterr().err
    fc = pd.read_csv(tmp_path / "forecast.csv")
    assert len(fc) == 0 and len(fc.columns) > 0


def test_blind_test_small_error(synth, tmp_path):
    code = main(["forecast", "--config", str(synth / "forecast.json"), "--out", str(tmp_path),
                 "--blind-test", "0.25"])
    assert code == 0
    summary = pd.read_csv(tmp_path / "blind_test_summary.csv")
    assert (summary.relative_error < 0.01).all()


@pytest.mark.parametrize("fraction", ["-0.1", "1.0", "1.5"])
def test_blind_test_bad_fraction(synth, tmp_path, fraction):
    code = main(["forecast", "--config", str(synth / "forecast.json"), "--out", str(tmp_path),
                 "--blind-test", fraction])
    assert code == 2


def test_config_errors(synth, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"network": "network.json", "history": "history.csv", "colour": 1}))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["simulate", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path / "o")]) == 2
    broken = tmp_path / "broken.toml"
    broken.write_text("seed = [\n")
    assert main(["cluster", "--config", str(broken), "--out", str(tmp_path / "o")]) == 2
    bad.write_text(json.dumps({"network": str(synth / "network.json"), "history": str(synth / "history.csv"),
                               "solver": {"tol_residual": -1}}))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_empty_wells_file(tmp_path):
    (tmp_path / "wells.csv").write_text("")
    cfg = tmp_path / "c.toml"
    cfg.write_text('wells = "wells.csv"\nnumeric = ["x", "y"]\n')
    assert main(["cluster", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_cluster_builtin(tmp_path):
    assert main(["cluster", "--config", str(CONFIGS / "cluster_three_blobs.toml"), "--out", str(tmp_path)]) == 0
    assign = pd.read_csv(tmp_path / "assignments.csv")
    assert assign.iloc[:, -1].nunique() >= 3
    for name in ("cost_curve.csv", "zones.csv", "zones.json", "manifest.json"):
        assert (tmp_path / name).exists()


def _csv_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(Path(d).glob("*.csv"))}


def test_deterministic_reruns(tmp_path):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"n_steps": 8}))
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for d in (a, b):
        assert main(["make-synthetic", "--config", str(cfg), "--out", str(d), "--seed", "5"]) == 0
    assert main(["make-synthetic", "--config", str(cfg), "--out", str(c), "--seed", "6"]) == 0
    assert _csv_bytes(a) == _csv_bytes(b)
    assert (a / "network.json").read_bytes() == (b / "network.json").read_bytes()
    # the seed moves the observation noise only
    assert (a / "observations.csv").read_bytes() != (c / "observations.csv").read_bytes()
    assert (a / "truth_pressures.csv").read_bytes() == (c / "truth_pressures.csv").read_bytes()


def test_zero_noise_observations_equal_truth(tmp_path):
    cfg = tmp_path / "gen.json"
    cfg.write_text(json.dumps({"n_steps": 6, "noise_std": 0.0}))
    assert main(["make-synthetic", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    obs = pd.read_csv(tmp_path / "observations.csv")
    truth = pd.read_csv(tmp_path / "truth_pressures.csv")
    merged = truth.merge(obs, on=["time", "block"])
    np.testing.assert_array_equal(merged.pobs, merged.p)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "matnet", "simulate", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 2 and "network" in res.stderr
