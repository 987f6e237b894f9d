import math

import numpy as np
import pytest

from vkns2d import InitConfig, Params, StepControl
from vkns2d.dynamics import RHS
from vkns2d.verification import (
    ABORTED,
    FAIL,
    INSUFFICIENT,
    PASS,
    Assertion,
    PreconditionError,
    ScenarioSpec,
    run_conservation,
    run_scenario,
    run_trajectory,
    temporal_self_convergence,
)

P22 = Params(1.0, 2.0, 2.0)
REST = InitConfig(rho_amplitude=0.0)
PERTURBED = InitConfig(rho_amplitude=0.3, u_amplitude=0.5, mode=(1, 1))


def spec(runner, init=PERTURBED, t_end=0.2, n=16, **kw):
    ctl = StepControl(t_end=t_end, output_interval=0.05)
    return ScenarioSpec(f"{runner}-test", runner, kw.pop("params", P22), init, ctl, n=n, **kw)


class Forced(RHS):
    """Adds a uniform momentum source: a non-conservative negative control."""

    def __call__(self, Sh, out):
        super().__call__(Sh, out)
        out[1, 0, 0] += 1e-3
        return out


def test_assertion_validation_and_holds():
    a = Assertion("mass_drift", "<=", 1e-10)
    assert a.holds(1e-10) and not a.holds(2e-10)
    with pytest.raises(ValueError):
        Assertion("mass_drift", "==", 0.0)
    with pytest.raises(ValueError):
        Assertion("mass_drift", "<", 1.0, "maybe")


def test_spec_validation():
    with pytest.raises(ValueError, match="unknown runner"):
        spec("nope")
    with pytest.raises(ValueError, match="not produced"):
        spec("energy", assertions=(Assertion("rho_min", ">", 0.0),))
    with pytest.raises(ValueError, match="mollified-target"):
        spec("ladder", init=InitConfig(width=0.1))
    single = InitConfig(kind="mollified-target", width=0.1)
    with pytest.raises(ValueError, match="at least 3 rungs"):
        spec("ladder", init=single, widths=(0.1,))
    assert len(spec("ladder", init=single).ladder_widths) == 4


def test_config_hash_stable():
    assert spec("energy").config_hash() == spec("energy").config_hash()
    assert spec("energy").config_hash() != spec("energy", t_end=0.3).config_hash()


@pytest.mark.parametrize("runner", ["conservation", "energy", "density", "ratios", "large-time"])
def test_rest_state_passes(runner):
    res = run_scenario(spec(runner, init=REST, t_end=1.0, min_horizon=0.5))
    assert res.status == PASS, res.table()
    assert res.provenance["version"] and len(res.provenance["config_hash"]) == 64
    if runner == "conservation":
        assert res.values["mass_drift"] <= 1e-12 and res.values["momentum_drift"] <= 1e-12
    if runner == "density":
        assert res.values["rho_min"] == pytest.approx(1.0) == res.values["rho_max"]
    if runner == "ratios":
        assert res.values["ratio_logY_sup"] == 0.0 == res.values["ratio_G_sup"]
    if runner == "energy":
        assert res.values["dissipation_total"] == 0.0


def test_perturbed_short_runs_pass():
    traj = run_trajectory(spec("energy"))
    for runner in ("conservation", "energy", "density", "ratios"):
        res = run_scenario(spec(runner), traj)
        assert res.status == PASS, res.table()
    energy = run_scenario(spec("energy"), traj)
    t, resid = energy.extra["residual"]
    E0 = traj.records[0].E
    assert len(t) == 5 and np.all(resid <= 1e-6 * E0 * t)


def test_tiny_viscosity_energy_still_holds():
    res = run_scenario(spec("energy", params=Params(1e-3, 2.0, 2.0), n=32, t_end=0.1))
    assert res.status == PASS, res.table()


def test_forcing_fails_conservation():
    res = run_conservation(spec("conservation"), rhs_factory=Forced)
    assert res.status == FAIL
    assert "momentum_drift" in res.reason
    assert res.values["momentum_drift"] > 1e-5


def test_aborted_run_never_passes():
    ctl = StepControl(t_end=0.2, output_interval=0.05, rho_floor=0.8)
    s = ScenarioSpec("floor", "density", P22, PERTURBED, ctl, n=16)
    res = run_scenario(s)
    assert res.status == ABORTED and not res.passed
    assert "vacuum-breach" in res.reason


def test_large_time_insufficient_horizon():
    res = run_scenario(spec("large-time", t_end=0.1))
    assert res.status == INSUFFICIENT
    assert res.values["rho_decay"] > 0.05


def test_large_time_short_horizon_below_threshold_fails():
    res = run_scenario(spec("large-time", t_end=0.1, min_horizon=0.05))
    assert res.status == FAIL


@pytest.mark.parametrize(
    "params, needle",
    [(Params(1.0, 1.4, 1.2), "beta > 3/2"), (Params(1.0, 2.0, 5.0), "gamma < 4 beta - 3")],
)
def test_large_time_precondition(params, needle):
    with pytest.raises(PreconditionError, match=needle):
        run_scenario(spec("large-time", params=params))


def test_ladder_band_limited_target_identical():
    init = InitConfig(kind="mollified-target", seed=2, rho_amplitude=0.2, u_amplitude=0.2, target_band=3, width=1e-9)
    res = run_scenario(spec("ladder", init=init, t_end=0.05))
    assert max(res.extra["gaps"]) <= 1e-12
    assert res.status == PASS


def test_ladder_parallel_matches_serial():
    init = InitConfig(kind="mollified-target", seed=3, rho_amplitude=0.2, u_amplitude=0.2, width=0.1)
    a = run_scenario(spec("ladder", init=init, t_end=0.05))
    b = run_scenario(spec("ladder", init=init, t_end=0.05, jobs=2))
    assert a.extra["gaps"] == b.extra["gaps"]
    assert len(a.extra["psi"]) == 4 and a.extra["psi"][-1] == 0.0


def test_scenario_deterministic():
    a = run_scenario(spec("ratios"))
    b = run_scenario(spec("ratios"))
    assert a.values == b.values
    assert [r.E for r in a.records] == [r.E for r in b.records]


def test_table_lists_assertions():
    res = run_scenario(spec("conservation"))
    lines = res.table().splitlines()
    assert lines[0].startswith("scenario conservation-test: pass")
    assert len(lines) == 1 + len(res.outcomes)


def test_temporal_self_convergence_checks():
    from vkns2d import Grid, initial_state

    s = initial_state(Grid(16), InitConfig(rho_amplitude=0.1))
    with pytest.raises(ValueError, match="3 levels"):
        temporal_self_convergence(s, P22, 1e-3, 0.01, levels=2)
    with pytest.raises(ValueError, match="not binding"):
        temporal_self_convergence(s, P22, 0.5, 1.0)
    diffs, orders = temporal_self_convergence(s, Params(0.01, 2.0, 8.0), 4e-4, 0.02)
    assert len(diffs) == 2 and len(orders) == 1 and math.isfinite(orders[0])
