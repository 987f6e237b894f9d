"""Scenario runners: desk-scale experiments with pass/fail or report-only checks.

A :class:`ScenarioSpec` names a runner, the run to perform and a list of
:class:`Assertion` objects. Each runner turns the diagnostics record series
into a dictionary of named scalar functionals (see :data:`FUNCTIONALS`);
assertions compare those functionals with thresholds. Claims with explicit
comparators (conservation, the energy inequality, positivity, decay) are
pass/fail by default; sup-stability surrogates for bounds with unknown
constants are also checked, with the raw sups kept report-only.
"""

from __future__ import annotations

import hashlib
import json
import math
import operator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from ._version import __version__
from .diagnostics import DiagnosticsRecord, ExponentSchedule, Monitor, search_schedule
from .dynamics import RHS, SimulationResult, StepControl, simulate
from .fluid import FluidState, InitConfig, Params, initial_state
from .spectral import Grid

__all__ = [
    "Assertion",
    "AssertionOutcome",
    "FUNCTIONALS",
    "PreconditionError",
    "ScenarioResult",
    "ScenarioSpec",
    "Trajectory",
    "run_conservation",
    "run_density_bounds",
    "run_energy_inequality",
    "run_large_time",
    "run_logY_and_G_ratios",
    "run_mollification_ladder",
    "run_scenario",
    "run_trajectory",
    "temporal_self_convergence",
]

PASS = "pass"
FAIL = "fail"
ABORTED = "aborted"
INSUFFICIENT = "insufficient-horizon"

_COMPARATORS = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


class PreconditionError(ValueError):
    """The scenario's parameters lie outside the regime the runner requires."""


@dataclass(frozen=True)
class Assertion:
    """``functional comparator threshold``, e.g. ``mass_drift <= 1e-10``."""

    functional: str
    comparator: str
    threshold: float
    mode: str = "pass-fail"

    def __post_init__(self) -> None:
        if self.comparator not in _COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")
        if self.mode not in ("pass-fail", "report-only"):
            raise ValueError(f"mode must be 'pass-fail' or 'report-only', got {self.mode!r}")

    def holds(self, value: float) -> bool:
        return bool(_COMPARATORS[self.comparator](value, self.threshold))


@dataclass(frozen=True)
class AssertionOutcome:
    assertion: Assertion
    value: float
    holds: bool

    @property
    def counts(self) -> bool:
        return self.assertion.mode == "pass-fail"


# Functionals each runner produces, with its default assertions.
_INF = math.inf
DEFAULT_ASSERTIONS: dict[str, tuple[Assertion, ...]] = {
    "conservation": (
        Assertion("mass_drift", "<=", 1e-10),
        Assertion("momentum_drift", "<=", 1e-10),
    ),
    "energy": (
        Assertion("energy_residual", "<=", 0.0),
        Assertion("energy_pair_residual", "<=", 0.0),
        Assertion("dissipation_budget", "<=", 0.0),
        Assertion("dissipation_total", "<", _INF, "report-only"),
    ),
    "density": (
        Assertion("rho_min", ">", 0.0),
        Assertion("rho_max", "<", _INF, "report-only"),
        Assertion("rho_max_trend", "<=", 1.0, "report-only"),
    ),
    "large-time": (
        Assertion("rho_decay", "<=", 0.05),
        Assertion("grad_u_decay", "<=", 0.05),
        Assertion("int_PP_growth", "<", 0.05),
        Assertion("int_PP", "<", _INF, "report-only"),
    ),
    "ratios": (
        Assertion("ratio_logY_sup", "<", _INF),
        Assertion("ratio_G_sup", "<", _INF),
        Assertion("ratio_logY_growth", "<", 0.5),
        Assertion("ratio_G_growth", "<", 0.5),
        Assertion("int_XY", "<", _INF),
    ),
    "ladder": (
        Assertion("ladder_gap_ratio_max", "<", 1.0),
        Assertion("ladder_final_ratio", "<=", 0.5),
    ),
}

FUNCTIONALS: dict[str, frozenset[str]] = {
    "conservation": frozenset({"mass_drift", "momentum_drift", "mass_error", "momentum_norm"}),
    "energy": frozenset(
        {"energy_residual", "energy_pair_residual", "dissipation_budget", "dissipation_total"}
    ),
    "density": frozenset({"rho_min", "rho_max", "rho_max_trend"}),
    "large-time": frozenset({"rho_decay", "grad_u_decay", "int_PP_growth", "int_PP"}),
    "ratios": frozenset(
        {"ratio_logY_sup", "ratio_G_sup", "ratio_logY_growth", "ratio_G_growth", "int_XY"}
    ),
    "ladder": frozenset({"ladder_gap_ratio_max", "ladder_final_ratio", "ladder_first_gap", "ladder_last_gap"}),
}


@dataclass(frozen=True)
class ScenarioSpec:
    """One scenario.

    ``schedule`` defaults to the first admissible exponent schedule for
    ``(beta, gamma)``. ``widths`` is the mollification ladder (defaults to
    ``init.width * (1, 1/2, 1/4, 1/8)``). ``min_horizon`` is the run length
    below which unmet decay checks report ``insufficient-horizon`` instead
    of ``fail``; ``plateau_window`` is the trailing time window over which
    the growth of the cumulative pressure integral is measured.
    """

    name: str
    runner: str
    params: Params
    init: InitConfig
    control: StepControl
    n: int = 64
    assertions: tuple[Assertion, ...] = ()
    q_list: tuple[float, ...] = ()
    p_list: tuple[float, ...] = ()
    schedule: ExponentSchedule | None = None
    widths: tuple[float, ...] = ()
    energy_slack: float = 1e-6
    min_horizon: float = 50.0
    plateau_window: float = 10.0
    ladder_floor: float = 1e-12
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.runner not in FUNCTIONALS:
            raise ValueError(f"unknown runner {self.runner!r}; choose from {sorted(FUNCTIONALS)}")
        known = FUNCTIONALS[self.runner]
        for a in self.assertions:
            if a.functional not in known:
                raise ValueError(
                    f"assertion on {a.functional!r} is not produced by runner {self.runner!r}"
                )
        if self.runner == "ladder":
            if self.init.kind != "mollified-target":
                raise ValueError("the mollification ladder needs init kind 'mollified-target'")
            if len(self.ladder_widths) < 3:
                raise ValueError("the mollification ladder needs at least 3 rungs")

    @property
    def effective_assertions(self) -> tuple[Assertion, ...]:
        return self.assertions or DEFAULT_ASSERTIONS[self.runner]

    @property
    def effective_schedule(self) -> ExponentSchedule:
        if self.schedule is not None:
            return self.schedule
        return search_schedule(self.params.beta, self.params.gamma)[0]

    @property
    def ladder_widths(self) -> tuple[float, ...]:
        if self.widths:
            return tuple(self.widths)
        if self.init.width > 0:
            return tuple(self.init.width / 2**i for i in range(4))
        return ()

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class ScenarioResult:
    name: str
    status: str
    reason: str = ""
    outcomes: list[AssertionOutcome] = field(default_factory=list)
    records: list[DiagnosticsRecord] = field(default_factory=list)
    values: dict[str, float] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def table(self) -> str:
        """Per-assertion table, one line each."""
        lines = [f"scenario {self.name}: {self.status}" + (f" ({self.reason})" if self.reason else "")]
        for o in self.outcomes:
            a = o.assertion
            tag = ("ok" if o.holds else "FAIL") if o.counts else "report"
            lines.append(
                f"  {a.functional:<22} {o.value:<24.17g} {a.comparator:>2} {a.threshold:<10.6g} {tag}"
            )
        return "\n".join(lines)


# -- trajectories ----------------------------------------------------------------------


@dataclass
class Trajectory:
    result: SimulationResult
    records: list[DiagnosticsRecord]
    t_end: float

    @property
    def aborted(self) -> bool:
        return not self.result.completed

    def until(self, t: float) -> "Trajectory":
        """The leading part of the series, up to and including time ``t``."""
        recs = [r for r in self.records if r.t <= t + 1e-9]
        return Trajectory(self.result, recs, t)


def run_trajectory(
    spec: ScenarioSpec,
    *,
    init=None,
    rhs_factory: Callable[[Grid, Params], RHS] | None = None,
    callback=None,
) -> Trajectory:
    """Simulate ``spec`` with a diagnostics monitor attached."""
    grid = Grid(spec.n)
    state = init if init is not None else initial_state(grid, spec.init)
    mon = Monitor(spec.params, spec.effective_schedule, spec.q_list, spec.p_list, callback=callback)
    res = simulate(state, spec.params, spec.control, mon, rhs_factory=rhs_factory)
    return Trajectory(res, mon.records, spec.control.t_end)


def _provenance(spec: ScenarioSpec) -> dict:
    return {"config_hash": spec.config_hash(), "version": __version__, "seed": spec.init.seed}


def _conclude(
    spec: ScenarioSpec,
    traj: Trajectory | None,
    values: dict[str, float],
    *,
    extra: dict | None = None,
    records: list[DiagnosticsRecord] | None = None,
    undecided: str = FAIL,
) -> ScenarioResult:
    outcomes = [AssertionOutcome(a, float(values[a.functional]), a.holds(values[a.functional]))
                for a in spec.effective_assertions]
    status, reason = PASS, ""
    failed = [o.assertion.functional for o in outcomes if o.counts and not o.holds]
    if traj is not None and traj.aborted:
        status, reason = ABORTED, f"{traj.result.status}: {traj.result.reason}"
    elif failed:
        status, reason = undecided, "failed: " + ", ".join(failed)
    return ScenarioResult(
        spec.name, status, reason, outcomes,
        list(records if records is not None else (traj.records if traj else [])),
        values, _provenance(spec), extra or {},
    )


def _empty_values(spec: ScenarioSpec) -> dict[str, float]:
    return {k: math.nan for k in FUNCTIONALS[spec.runner]}


def _series(records: Sequence[DiagnosticsRecord], name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in records], dtype=float)


# -- runners ---------------------------------------------------------------------------


def run_conservation(
    spec: ScenarioSpec,
    trajectory: Trajectory | None = None,
    *,
    rhs_factory: Callable[[Grid, Params], RHS] | None = None,
) -> ScenarioResult:
    """Mass and momentum drift over the run.

    ``mass_drift`` and ``momentum_drift`` are measured from the initial
    sample; ``mass_error`` and ``momentum_norm`` against the configured
    mean density and zero momentum.
    """
    traj = trajectory or run_trajectory(spec, rhs_factory=rhs_factory)
    recs = traj.records
    values = _empty_values(spec)
    if recs:
        m = _series(recs, "mass")
        mom = np.array([r.momentum for r in recs])
        values["mass_drift"] = float(np.max(np.abs(m - m[0])))
        values["momentum_drift"] = float(np.max(np.linalg.norm(mom - mom[0], axis=1)))
        values["mass_error"] = float(np.max(np.abs(m - spec.init.rho_mean)))
        values["momentum_norm"] = float(np.max(np.linalg.norm(mom, axis=1)))
    return _conclude(spec, traj, values)


def run_energy_inequality(spec: ScenarioSpec, trajectory: Trajectory | None = None) -> ScenarioResult:
    """``E(t) + int_0^t D^2 <= E0 (1 + slack t)`` at every sample and pair.

    The pair form ``E(t2) + int_{t1}^{t2} D^2 <= E(t1) + slack E0 (t2 - t1)``
    is checked on consecutive samples, which implies it for every pair.
    ``extra['residual']`` holds the residual curve ``(t, E + diss - E0)``.
    """
    traj = trajectory or run_trajectory(spec)
    recs = traj.records
    values = _empty_values(spec)
    extra = {}
    if recs:
        s = spec.energy_slack
        t = _series(recs, "t")
        E = _series(recs, "E")
        diss = _series(recs, "dissipation")
        E0 = E[0]
        diss = diss - diss[0]
        values["energy_residual"] = float(np.max(E + diss - E0 * (1 + s * (t - t[0]))))
        if len(recs) > 1:
            pair = (E[1:] + np.diff(diss)) - (E[:-1] + s * E0 * np.diff(t))
            values["energy_pair_residual"] = float(np.max(pair))
        else:
            values["energy_pair_residual"] = 0.0
        values["dissipation_total"] = float(diss[-1])
        values["dissipation_budget"] = float(diss[-1] - E0 * (1 + s * (t[-1] - t[0])))
        extra["residual"] = np.stack([t, E + diss - E0])
    return _conclude(spec, traj, values, extra=extra)


def run_density_bounds(spec: ScenarioSpec, trajectory: Trajectory | None = None) -> ScenarioResult:
    """Observed lower and upper density bounds over the run.

    ``rho_max_trend`` is the ratio of the largest density over the second
    half of the run to that over the first half; values at or below 1 are
    consistent with a time-uniform upper bound. It is only computed for
    parameters in the Huang-Li regime (NaN otherwise) and is report-only.
    """
    traj = trajectory or run_trajectory(spec)
    recs = traj.records
    values = _empty_values(spec)
    if recs:
        values["rho_min"] = float(np.min(_series(recs, "rho_min")))
        values["rho_max"] = float(np.max(_series(recs, "rho_max")))
        if spec.params.huang_li_regime and len(recs) > 2:
            t = _series(recs, "t")
            mx = _series(recs, "rho_max")
            half = t <= 0.5 * (t[0] + t[-1])
            values["rho_max_trend"] = float(np.max(mx[~half]) / np.max(mx[half]))
    return _conclude(spec, traj, values)


def _check_huang_li(p: Params) -> None:
    if not p.beta > 1.5:
        raise PreconditionError(f"large-time runner needs beta > 3/2, got beta={p.beta}")
    if not p.gamma < 4 * p.beta - 3:
        raise PreconditionError(
            f"large-time runner needs gamma < 4 beta - 3, got gamma={p.gamma} >= {4 * p.beta - 3}"
        )


def _decay(now: float, then: float) -> float:
    if then == 0.0:
        return 0.0 if now == 0.0 else math.inf
    return now / then


def run_large_time(spec: ScenarioSpec, trajectory: Trajectory | None = None) -> ScenarioResult:
    """Decay of ``||rho - mean(rho)||_2`` and ``||grad u||_2`` by ``t_end``.

    Also measures the relative growth of the cumulative integral of
    ``||P - P_bar||_2^2`` over the last ``plateau_window`` time units (at
    most half the run). When the run is shorter than ``min_horizon`` and a
    check fails, the status is ``insufficient-horizon`` rather than ``fail``.
    """
    _check_huang_li(spec.params)
    traj = trajectory or run_trajectory(spec)
    recs = traj.records
    values = _empty_values(spec)
    if recs:
        first, last = recs[0], recs[-1]
        values["rho_decay"] = _decay(last.rho_dev_L2, first.rho_dev_L2)
        values["grad_u_decay"] = _decay(last.grad_u_L2, first.grad_u_L2)
        values["int_PP"] = last.int_PP
        t = _series(recs, "t")
        window = min(spec.plateau_window, 0.5 * (t[-1] - t[0]))
        start = recs[int(np.searchsorted(t, t[-1] - window - 1e-9))]
        values["int_PP_growth"] = _decay(last.int_PP - start.int_PP, start.int_PP)
    horizon = traj.t_end if traj is not None else spec.control.t_end
    undecided = INSUFFICIENT if horizon < spec.min_horizon else FAIL
    return _conclude(spec, traj, values, undecided=undecided)


def run_logY_and_G_ratios(spec: ScenarioSpec, trajectory: Trajectory | None = None) -> ScenarioResult:
    """Sup-stability of ``ratio_logY`` and ``ratio_G``.

    ``*_growth`` is ``sup(second half) / sup(first half) - 1``, 0 when both
    sups vanish. ``int_XY`` is the cumulative integral of ``X^2 / (10 + Y^2)``.
    """
    traj = trajectory or run_trajectory(spec)
    recs = traj.records
    values = _empty_values(spec)
    if recs:
        t = _series(recs, "t")
        half = t <= 0.5 * (t[0] + t[-1])
        for name in ("ratio_logY", "ratio_G"):
            r = _series(recs, name)
            values[f"{name}_sup"] = float(np.max(r))
            s1 = float(np.max(r[half]))
            s2 = float(np.max(r[~half])) if np.any(~half) else 0.0
            values[f"{name}_growth"] = _decay(s2, s1) - 1.0 if s1 > 0 else (0.0 if s2 == 0 else math.inf)
        values["int_XY"] = recs[-1].int_XY
    return _conclude(spec, traj, values)


def _run_rung(args: tuple[ScenarioSpec, float]) -> tuple[str, str, np.ndarray | None, list]:
    spec, width = args
    sub = replace(spec, init=replace(spec.init, width=width), runner="density", assertions=())
    traj = run_trajectory(sub)
    rho = traj.result.state.rho if traj.result.completed else None
    return traj.result.status, traj.result.reason, None if rho is None else np.array(rho), traj.records


def run_mollification_ladder(spec: ScenarioSpec) -> ScenarioResult:
    """Run every mollified datum to ``t_end`` and compare neighbouring rungs.

    The gaps ``||rho_h(T) - rho_{h/2}(T)||_{L^2}`` should decrease strictly;
    gaps below ``ladder_floor`` count as converged. ``ladder_gap_ratio_max``
    is the largest ratio of successive unconverged gaps (0 if none) and
    ``ladder_final_ratio`` the last gap over the first. ``extra['psi']``
    lists ``int rho_h^2 - int rho_finest^2`` per rung, a finite-resolution
    echo of the defect measure that the weak-limit construction controls.
    """
    widths = spec.ladder_widths
    jobs = [(spec, h) for h in widths]
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=min(spec.jobs, len(jobs))) as ex:
            rungs = list(ex.map(_run_rung, jobs))
    else:
        rungs = [_run_rung(j) for j in jobs]
    values = _empty_values(spec)
    extra: dict = {"widths": widths}
    finest_records = rungs[-1][3]
    for status, reason, rho, _ in rungs:
        if rho is None:
            res = _conclude(spec, None, values, records=finest_records)
            res.status, res.reason = ABORTED, f"{status}: {reason}"
            return res
    grid = Grid(spec.n)
    fields = [r[2] for r in rungs]
    gaps = [grid.norm(a - b, 2) for a, b in zip(fields, fields[1:])]
    floor = spec.ladder_floor
    ratios = [g1 / g0 for g0, g1 in zip(gaps, gaps[1:]) if g0 > floor]
    values["ladder_first_gap"] = gaps[0]
    values["ladder_last_gap"] = gaps[-1]
    values["ladder_gap_ratio_max"] = max(ratios) if ratios else 0.0
    values["ladder_final_ratio"] = gaps[-1] / gaps[0] if gaps[0] > floor else 0.0
    sq = [grid.integrate(f**2) for f in fields]
    extra["gaps"] = gaps
    extra["psi"] = [s - sq[-1] for s in sq]
    return _conclude(spec, None, values, extra=extra, records=finest_records)


def temporal_self_convergence(
    init: FluidState, p: Params, dt: float, t_end: float, levels: int = 3
) -> tuple[list[float], list[float]]:
    """Observed order of the time stepper from runs at ``dt / 2**i``.

    Every step has the fixed size ``dt / 2**i`` (the step rule is relaxed to
    ``cfl = 1`` so that ``dt_max`` binds; ``dt`` must lie below the
    stability limit). Returns the L2 differences of successive levels,
    taken over ``rho, m1, m2``, and ``log2`` of the ratios of consecutive
    differences.
    """
    if levels < 3:
        raise ValueError("need at least 3 levels to estimate an order")
    finals = []
    for i in range(levels):
        h = dt / 2**i
        ctl = StepControl(cfl=1.0, dt_max=h, t_end=t_end, output_interval=t_end)
        res = simulate(init, p, ctl)
        if not res.completed:
            raise RuntimeError(f"level {i} aborted: {res.status}: {res.reason}")
        if res.steps != round((t_end - init.t) / h):
            raise ValueError(f"dt={h:g} is not binding; the stability limit is smaller")
        finals.append(np.concatenate([res.state.rho[None], res.state.m]))
    g = init.grid
    diffs = [g.norm(a - b, 2) for a, b in zip(finals, finals[1:])]
    orders = [math.log2(d0 / d1) for d0, d1 in zip(diffs, diffs[1:])]
    return diffs, orders


_RUNNERS = {
    "conservation": run_conservation,
    "energy": run_energy_inequality,
    "density": run_density_bounds,
    "large-time": run_large_time,
    "ratios": run_logY_and_G_ratios,
}


def run_scenario(spec: ScenarioSpec, trajectory: Trajectory | None = None) -> ScenarioResult:
    """Dispatch on ``spec.runner``."""
    if spec.runner == "ladder":
        return run_mollification_ladder(spec)
    return _RUNNERS[spec.runner](spec, trajectory)
