"""Acceptance criteria 1-11. Each test records one PASS/FAIL line, printed
in the terminal summary. The long scenarios share one T = 50 trajectory.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import noise
from vkns2d import FluidState, Grid, InitConfig, Params, initial_state
from vkns2d.cli import main
from vkns2d.diagnostics import commutator_G
from vkns2d.inequalities import LabConfig, run_lab
from vkns2d.io import load_config
from vkns2d.verification import run_scenario, run_trajectory, temporal_self_convergence

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def cfg():
    return load_config(CONFIGS / "acceptance.toml")


@pytest.fixture(scope="module")
def long_run(cfg):
    """The perturbed beta = gamma = 2 run to T = 50, with wall-clock marks."""
    marks = {}
    t0 = time.perf_counter()

    def clock(rec, sample):
        if abs(rec.t - 10.0) < 1e-9:
            marks[10.0] = time.perf_counter() - t0

    traj = run_trajectory(cfg.scenarios["large_time"], callback=clock)
    marks["total"] = time.perf_counter() - t0
    return traj, marks


def test_c01_spectral_identities(acceptance_report):
    g = Grid(64)
    t0 = time.perf_counter()
    worst = {"riesz": 0.0, "laplace": 0.0, "divcurl": 0.0}
    for seed in range(100):
        f, v1, v2 = noise(g, seed, band=16, count=3)
        dev = f - g.mean(f)
        riesz = g.riesz_composition(1, 1, f) + g.riesz_composition(2, 2, f)
        worst["riesz"] = max(worst["riesz"], float(np.max(np.abs(riesz + dev))))
        lap = g.laplacian(-g.inv_laplacian_zero_mean(f))
        worst["laplace"] = max(worst["laplace"], float(np.max(np.abs(lap + dev))))
        v = np.stack([v1, v2])
        grad = g.jacobian(v)
        lhs = g.integrate(np.sum(grad * grad, axis=(0, 1)))
        rhs = g.integrate(g.divergence(v) ** 2) + g.integrate(g.rot(v) ** 2)
        worst["divcurl"] = max(worst["divcurl"], abs(lhs - rhs) / lhs)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-10 and elapsed < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f}s"
    assert acceptance_report("1 spectral identities", ok, detail)


def test_c02_conservation(cfg, long_run, acceptance_report):
    traj, marks = long_run
    res = run_scenario(cfg.scenarios["conservation"], traj.until(10.0))
    wall = marks.get(10.0, math.inf)
    ok = res.passed and wall < 300
    detail = (f"|mass-1| {res.values['mass_error']:.1e}, |momentum| {res.values['momentum_norm']:.1e}, "
              f"t=10 reached in {wall:.0f}s")
    assert acceptance_report("2 conservation", ok, detail), res.table()


def test_c03_energy_inequality(cfg, long_run, acceptance_report):
    traj, _ = long_run
    res = run_scenario(cfg.scenarios["energy"], traj.until(10.0))
    v = res.values
    ok = res.passed and math.isfinite(v["dissipation_total"])
    detail = (f"max pair residual {v['energy_pair_residual']:.2e}, "
              f"int D^2 dt = {v['dissipation_total']:.6g}")
    assert acceptance_report("3 energy inequality", ok, detail), res.table()


def test_c04_temporal_order(acceptance_report):
    g = Grid(64)
    init = initial_state(g, InitConfig(rho_amplitude=0.1, mode=(1, 0)))
    _, orders = temporal_self_convergence(init, Params(0.01, 2.0, 8.0), 5e-5, 0.1)
    ok = 2.7 <= orders[0] <= 3.3
    assert acceptance_report("4 temporal order", ok, f"observed order {orders[0]:.3f}")


def test_c05_commutator_routes(acceptance_report):
    g = Grid(64)
    worst = 0.0
    for seed in range(50):
        f = noise(g, 1000 + seed, band=10, count=3)
        rho = 1 + 0.4 * f[0] / np.max(np.abs(f[0]))
        s = FluidState.from_velocity(g, 0.0, rho, f[1:])
        worst = max(worst, float(np.max(np.abs(commutator_G(s, "A") - commutator_G(s, "B")))))
    assert acceptance_report("5 commutator dual routes", worst <= 1e-8, f"max difference {worst:.1e}")


def test_c06_density_bounds(cfg, long_run, acceptance_report):
    traj, marks = long_run
    res = run_scenario(cfg.scenarios["density"], traj)
    v = res.values
    ok = res.passed and marks["total"] < 1800
    detail = (f"observed rho in [{v['rho_min']:.6f}, {v['rho_max']:.6f}], "
              f"max trend {v['rho_max_trend']:.4f}, run {marks['total']:.0f}s")
    assert acceptance_report("6 density bounds", ok, detail), res.table()


def test_c07_large_time(cfg, long_run, acceptance_report):
    traj, _ = long_run
    res = run_scenario(cfg.scenarios["large_time"], traj)
    v = res.values
    detail = (f"rho decay {v['rho_decay']:.1e}, grad u decay {v['grad_u_decay']:.1e}, "
              f"int (P-Pbar)^2 growth {v['int_PP_growth']:.1e} (total {v['int_PP']:.6g})")
    assert acceptance_report("7 large-time behaviour", res.passed, detail), res.table()


def test_c08_ratio_surrogates(cfg, long_run, acceptance_report):
    traj, _ = long_run
    res = run_scenario(cfg.scenarios["ratios"], traj)
    v = res.values
    detail = (f"logY sup {v['ratio_logY_sup']:.4g} growth {v['ratio_logY_growth']:+.3f}, "
              f"G sup {v['ratio_G_sup']:.4g} growth {v['ratio_G_growth']:+.3f}, "
              f"int X^2/(10+Y^2) {v['int_XY']:.6g}")
    assert acceptance_report("8 ratio surrogates", res.passed, detail), res.table()


@pytest.fixture(scope="module")
def lab():
    return run_lab(LabConfig(n=64, seeds=1000))


def test_c09_inequality_lab(lab, acceptance_report):
    checks = {k: v for k, v in lab.checks.items() if not k.startswith("gns spread")}
    failed = [k for k, v in checks.items() if not v]
    worst = max((r for r in lab.reports if not r.name.startswith("trudinger") and r.name != "divcurl-residual"),
                key=lambda r: r.drift)
    detail = (f"{len(checks)} checks, largest drift {worst.drift:.3f} ({worst.name}), "
              f"trudinger c1={lab.trudinger_c1:.4g} c2={lab.trudinger_c2:.4g}")
    if failed:
        detail += ", failed: " + ", ".join(failed)
    assert acceptance_report("9 inequality lab (finiteness, stability, exact cases)", not failed, detail)


@pytest.mark.xfail(strict=True, reason="the GNS sup over random fields decays like q^(-1/2) across q")
def test_c09_gns_spread(lab, acceptance_report):
    sups = {r.params["q"]: r.sup for r in lab.reports if r.name.startswith("gns")}
    spread = max(sups.values()) / min(sups.values())
    detail = f"sup ratio spread {spread:.2f}x over q=4..64 (" + ", ".join(f"{q:g}: {s:.4f}" for q, s in sups.items()) + ")"
    assert acceptance_report("9 GNS spread < 2x (expected failure)", spread < 2, detail)


def test_c10_mollification_ladder(cfg, acceptance_report):
    res = run_scenario(cfg.scenarios["ladder"])
    gaps = res.extra.get("gaps", [])
    strictly = all(b < a for a, b in zip(gaps, gaps[1:]))
    ok = res.passed and strictly and gaps[-1] <= 0.5 * gaps[0]
    detail = "gaps " + ", ".join(f"{x:.4f}" for x in gaps)
    assert acceptance_report("10 mollification ladder", ok, detail), res.table()


def test_c11_determinism_and_resume(tmp_path, acceptance_report):
    base = ["--config", str(CONFIGS / "perturbed.toml"), "--set", "time.t_end=0.4"]
    a, b, split = tmp_path / "a", tmp_path / "b", tmp_path / "split"
    codes = [main(["simulate", *base, "--out-dir", str(d)]) for d in (a, b)]
    identical = (a / "series.csv").read_bytes() == (b / "series.csv").read_bytes()
    codes.append(main(["simulate", *base, "--set", "time.t_end=0.2", "--out-dir", str(split)]))
    codes.append(main(["resume", "--out-dir", str(split), "--t-end", "0.4"]))
    x = np.loadtxt(a / "series.csv", delimiter=",", skiprows=1)
    y = np.loadtxt(split / "series.csv", delimiter=",", skiprows=1)
    same_shape = x.shape == y.shape
    err = float(np.max(np.abs(x - y) / np.maximum(1.0, np.abs(x)))) if same_shape else math.inf
    ok = codes == [0, 0, 0, 0] and identical and err <= 1e-12
    detail = f"byte-identical CSV: {identical}, resume vs straight max relative difference {err:.1e}"
    assert acceptance_report("11 determinism and persistence", ok, detail)
