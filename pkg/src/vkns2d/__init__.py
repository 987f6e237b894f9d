"""Pseudo-spectral solver and diagnostics for 2D compressible Navier-Stokes
flow with density-dependent bulk viscosity on the periodic unit square."""

from ._version import __version__
from .diagnostics import DiagnosticsRecord, ExponentSchedule, Monitor, record, search_schedule
from .dynamics import SimulationResult, StepControl, cfl_dt, rhs, simulate, step
from .fluid import FluidState, InitConfig, Params, VacuumBreach, energy, initial_state, mass, momentum
from .spectral import Grid

__all__ = [
    "DiagnosticsRecord",
    "ExponentSchedule",
    "FluidState",
    "Grid",
    "InitConfig",
    "Monitor",
    "Params",
    "SimulationResult",
    "StepControl",
    "VacuumBreach",
    "__version__",
    "cfl_dt",
    "energy",
    "initial_state",
    "mass",
    "momentum",
    "record",
    "rhs",
    "search_schedule",
    "simulate",
    "step",
]
