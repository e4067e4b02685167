import json
import subprocess
import sys

import numpy as np
import pytest

from hetune.harness import cli, experiments
from hetune.harness.config import ConfigError, ExperimentConfig, from_dict, load, preset
from hetune.hecore.serialize import load_keys
from hetune.pid import Theta
from hetune.seeker import TuningTrace


def small(name="g2-paper", **kw):
    return preset(name, **{"seeds": [0, 1], "k_max": 3, **kw})


def test_presets():
    assert preset("g1-paper").N == 5000
    assert preset("g2-paper").N == 500
    assert preset("g2-literal").N == 500
    assert preset("g3-paper").N == 8000
    cfg = preset("g1-paper")
    assert (cfg.alpha, cfg.gamma, cfg.k_max) == (1.0, 0.01, 50)
    assert cfg.initial_theta() == Theta(4.08, 0.45, 9.33, 0.50)


def test_validation_errors():
    for bad in ({"plant": "G9"}, {"backend": "paillier"}, {"gamma": 0}, {"seeds": []},
                {"plant": {"num": [1], "den": [1, 1]}}, {"preset": "nope"}, {"colour": 1},
                {"noise_pct": -1}):
        with pytest.raises(ConfigError):
            from_dict(bad)


def test_custom_plant_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"plant": {"num": [1], "den": [1, 2, 1], "delay": 0.5},
                                "theta0": {"Kp": 1, "Ki": 0.5, "Kd": 0.1, "Tf": 0.1},
                                "dt": 0.05, "settling_time": 20, "k_max": 2, "seeds": [4]}))
    cfg = load(path)
    assert cfg.plant_tf().order == 5 and cfg.N == 400
    report = experiments.cmd_tune(cfg, tmp_path)
    assert report["runs"][0]["iterations"] == 2
    with pytest.raises(ConfigError):
        load(tmp_path / "missing.json")


def test_tune_outputs_and_consistency(tmp_path):
    cfg = small()
    report = experiments.cmd_tune(cfg, tmp_path)
    root = tmp_path / cfg.name
    saved = json.loads((root / "report.json").read_text())
    assert saved["summary"] == report["summary"]
    for run in report["runs"]:
        d = root / f"seed{run['seed']}"
        assert {p.name for p in d.iterdir()} >= {"trace.csv", "step_initial.csv", "step_final.csv"}
        trace = TuningTrace.read_csv(d / "trace.csv")
        recomputed = experiments.summarize(cfg, run["seed"], trace)
        for key in ("initial_cost", "final_cost", "final_theta", "stable_all", "converged"):
            assert recomputed[key] == run[key]
        step = np.loadtxt(d / "step_final.csv", delimiter=",", skiprows=1)
        assert step.shape == (cfg.N, 2)


@pytest.mark.parametrize("backend", ["plaintext", "reference"])
def test_tune_is_byte_reproducible(tmp_path, backend):
    cfg = small(backend=backend, seeds=[2], k_max=2)
    experiments.cmd_tune(cfg, tmp_path / "a")
    experiments.cmd_tune(cfg, tmp_path / "b")
    a = (tmp_path / "a" / cfg.name / "seed2" / "trace.csv").read_bytes()
    b = (tmp_path / "b" / cfg.name / "seed2" / "trace.csv").read_bytes()
    assert a == b


def test_encrypted_tune_writes_replayable_transcript(tmp_path):
    cfg = small(backend="reference", seeds=[0], k_max=1, n_samples=20, transcript=True)
    experiments.cmd_tune(cfg, tmp_path)
    path = tmp_path / cfg.name / "seed0" / "transcript.jsonl"
    assert experiments.cmd_replay(path)["identical"]


def test_n_sweep(tmp_path):
    report = experiments.cmd_n_sweep(small(seeds=[0]), [0, 50], tmp_path)
    assert [r["N"] for r in report["sweep"]] == [500, 250]
    assert all(len(r["converged"]) == 1 for r in report["sweep"])
    with pytest.raises(ConfigError):
        experiments.cmd_n_sweep(small(), [100])


def test_timing():
    with pytest.raises(ConfigError):
        experiments.cmd_timing(small(backend="reference"))
    rep = experiments.cmd_timing(small(backend="rlwe"), repeats=2)
    assert rep["N"] == 500
    for key in ("enc_ms", "dec_ms", "per_sample_ms"):
        assert rep[key] > 0
    assert rep["projected_iteration_s"] == pytest.approx(2 * 500 * rep["per_sample_ms"] / 1000)


def test_keygen(tmp_path):
    info = experiments.cmd_keygen("paper", tmp_path / "k", seed=1)
    assert info["ring_dimension"] == 2048 and info["moduli"] == 5
    keys = load_keys(tmp_path / "k")
    assert keys.params.ring_dimension == 2048
    # a custom parameter file round-trips through load
    info2 = experiments.cmd_keygen(str(tmp_path / "k" / "params.json"), tmp_path / "k2", seed=2)
    assert info2["moduli"] == 5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"ring_dimension": 1000, "modulus_chain": ["7"]}))
    with pytest.raises(ValueError):
        experiments.cmd_keygen(str(bad), tmp_path / "k3")
    with pytest.raises(ConfigError):
        experiments.cmd_keygen("no-such-preset", tmp_path / "k4")


def test_bench_paper_table(tmp_path, monkeypatch):
    # shrink the horizon so the full grid stays quick; the table layout is what is checked
    real = experiments.preset
    monkeypatch.setattr(experiments, "preset", lambda key, /, **kw: real(key, k_max=1, n_samples=50, **kw))
    out = experiments.cmd_bench_paper(tmp_path, seeds=[0])
    rows = out["table"]
    assert len(rows) == 12
    g1 = next(r for r in rows if r["plant"] == "G1" and r["sigma"] == 0 and r["source"] == "reference")
    assert g1["Kp"] == 3.24
    assert (tmp_path / "table1.csv").exists()


def test_cli_tune_and_errors(tmp_path, capsys):
    code = cli.main(["tune", "--preset", "g2-paper", "--seed", "5", "--out", str(tmp_path)])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["N"] == 500
    assert (tmp_path / "g2-paper" / "seed5" / "trace.csv").exists()
    assert cli.main(["n-sweep", "--reductions", "120", "--out", str(tmp_path)]) == 2
    assert cli.main(["timing", "--backend", "reference"]) == 2


def test_cli_config_file_with_overrides(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"preset": "g2-paper", "k_max": 2, "seeds": [0, 1, 2]}))
    assert cli.main(["tune", "--config", str(path), "--seed", "7", "--out", str(tmp_path)]) == 0
    assert sorted(p.name for p in (tmp_path / "g2-paper").iterdir()) == ["report.json", "seed7"]


def test_cli_entry_point_installed(tmp_path):
    out = subprocess.run([sys.executable, "-m", "hetune.harness.cli", "keygen", "--params", "fast",
                          "--out", str(tmp_path / "keys")], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert json.loads(out.stdout)["ring_dimension"] == 1024


def test_experiment_config_roundtrip():
    cfg = preset("g3-paper", seeds=[1, 2], noise_pct=5.0)
    assert from_dict(cfg.to_dict()) == cfg
    assert isinstance(ExperimentConfig(), ExperimentConfig)
