import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from vkns2d.cli import main
from vkns2d.io import read_checkpoint, read_snapshot

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMALL = CONFIGS / "perturbed.toml"
# shrink the standard run so the CLI tests stay quick
QUICK = ["--set", "grid.n=16", "--set", "time.t_end=0.4", "--set", "time.output_interval=0.05"]


def rows(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_simulate_rest(tmp_path, capsys):
    out = tmp_path / "rest"
    assert main(["simulate", "--config", str(CONFIGS / "rest.toml"), "--out-dir", str(out)]) == 0
    data = rows(out / "series.csv")
    assert data.shape[0] == 5
    np.testing.assert_allclose(data[:, 4], 1.0, rtol=1e-12)
    m = manifest(out)
    assert m["status"] == "completed" and m["seed"] == 0
    assert all((out / f).exists() for f in m["outputs"])
    assert "simulate: completed" in capsys.readouterr().out


def test_simulate_row_count_and_snapshots(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", str(SMALL), "--out-dir", str(out), *QUICK, "--snapshot-every", "3"]) == 0
    assert rows(out / "series.csv").shape[0] == int(0.4 / 0.05) + 1
    snaps = sorted((out / "snapshots").iterdir())
    assert [p.name for p in snaps] == ["snap_000003.bin", "snap_000006.bin", "snap_000009.bin"]
    assert read_snapshot(snaps[-1]).t == pytest.approx(0.4)
    assert read_checkpoint(out / "checkpoint.bin").state.t == pytest.approx(0.4)


def test_simulate_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--config", str(SMALL), "--out-dir", str(out), "--seed", "5", *QUICK]) == 0
    assert (a / "series.csv").read_bytes() == (b / "series.csv").read_bytes()


def test_resume_matches_straight_run(tmp_path):
    straight, split = tmp_path / "straight", tmp_path / "split"
    assert main(["simulate", "--config", str(SMALL), "--out-dir", str(straight), *QUICK]) == 0
    half = [*QUICK[:-4], "--set", "time.t_end=0.2", "--set", "time.output_interval=0.05"]
    assert main(["simulate", "--config", str(SMALL), "--out-dir", str(split), *half]) == 0
    assert main(["resume", "--out-dir", str(split), "--t-end", "0.4"]) == 0
    a, b = rows(straight / "series.csv"), rows(split / "series.csv")
    assert a.shape == b.shape
    np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-12)
    assert manifest(split)["command"] == "resume"


def test_missing_config_exit_1(tmp_path, capsys):
    missing = tmp_path / "nope.toml"
    assert main(["simulate", "--config", str(missing), "--out-dir", str(tmp_path)]) == 1
    assert f"config file not found: {missing}" in capsys.readouterr().err


def test_bad_config_exit_1(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[params]\nmu = -1.0\nbeta = 2.0\ngamma = 2.0\n")
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1
    assert main(["resume", "--out-dir", str(tmp_path / "empty")]) == 1


def test_vacuum_stress_exit_2(tmp_path):
    out = tmp_path / "stress"
    assert main(["simulate", "--config", str(CONFIGS / "vacuum_stress.toml"), "--out-dir", str(out)]) == 2
    m = manifest(out)
    assert m["status"] == "vacuum-breach" and "vacuum" in m["reason"]
    assert rows(out / "series.csv").shape[0] >= 1


def test_verify_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "v.toml"
    cfg.write_text(
        """
[grid]
n = 16
[params]
mu = 1.0
beta = 2.0
gamma = 2.0
[init]
rho_amplitude = 0.3
u_amplitude = 0.5
mode = [1, 1]
[time]
t_end = 0.1
output_interval = 0.05
[scenario.conservation]
runner = "conservation"
[scenario.impossible]
runner = "density"
assertions = [{functional = "rho_max", comparator = "<", threshold = 1.0}]
[scenario.floor]
runner = "density"
time = {rho_floor = 0.9}
"""
    )
    out = tmp_path / "v"
    assert main(["verify", "--config", str(cfg), "--out-dir", str(out), "--only", "conservation"]) == 0
    assert "scenario conservation: pass" in capsys.readouterr().out
    assert main(["verify", "--config", str(cfg), "--out-dir", str(out), "--only", "conservation", "impossible"]) == 3
    assert main(["verify", "--config", str(cfg), "--out-dir", str(out), "--jobs", "2"]) == 2
    m = manifest(out)
    assert m["scenarios"] == {"conservation": "pass", "impossible": "fail", "floor": "aborted"}
    assert (out / "outcomes.csv").read_text().count("\n") == 1 + 2 + 1 + 3
    assert main(["verify", "--config", str(cfg), "--out-dir", str(out), "--only", "ghost"]) == 1


def test_ineq_lab(tmp_path, capsys):
    cfg = tmp_path / "lab.toml"
    cfg.write_text("[params]\nmu = 1.0\nbeta = 2.0\ngamma = 2.0\n[lab]\nn = 32\nband = 5\nseeds = 10\n")
    out = tmp_path / "lab"
    code = main(["ineq-lab", "--config", str(cfg), "--out-dir", str(out), "--seed", "100"])
    assert code in (0, 3)
    m = manifest(out)
    assert m["seed"] == 100 and m["lab"]["seeds"] == 10
    checks = (out / "checks.csv").read_text().splitlines()
    assert checks[0] == "check,passed"
    assert (code == 0) == all(line.endswith(",1") for line in checks[1:])
    assert (out / "lab.csv").read_text().startswith("name,params,samples,sup")


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("VKNS2D_OUT_DIR", str(tmp_path / "env"))
    assert main(["simulate", "--config", str(CONFIGS / "rest.toml"), "--set", "time.t_end=0.25"]) == 0
    assert (tmp_path / "env" / "series.csv").exists()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "vkns2d.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("vkns2d ")
