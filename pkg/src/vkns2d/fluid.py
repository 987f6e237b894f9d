"""Physical state, constitutive laws and conserved scalars.

The prognostic variables are density ``rho`` and momentum ``m = rho u``.
Constitutive laws are ``lambda(rho) = rho**beta`` (bulk viscosity) and
``P(rho) = rho**gamma`` (pressure); the shear viscosity ``mu`` is constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .spectral import Grid, band_limited_noise, check_finite

__all__ = [
    "FluidState",
    "InitConfig",
    "Params",
    "VacuumBreach",
    "bulk_viscosity",
    "energy",
    "initial_state",
    "kinetic_energy",
    "mass",
    "momentum",
    "pressure",
]


class VacuumBreach(RuntimeError):
    """Density reached zero or went negative."""

    def __init__(self, index: tuple[int, int], value: float):
        self.index = index
        self.value = value
        super().__init__(f"vacuum breach: rho={value!r} at grid index {index}")


def _require_positive(rho: np.ndarray) -> None:
    check_finite(rho, "density")
    k = int(np.argmin(rho))
    idx = np.unravel_index(k, rho.shape)
    if rho[idx] <= 0.0:
        raise VacuumBreach(tuple(int(i) for i in idx), float(rho[idx]))


@dataclass(frozen=True)
class Params:
    """Shear viscosity ``mu`` and the exponents of ``lambda`` and ``P``."""

    mu: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise ValueError(f"mu must be > 0, got {self.mu!r}")
        if not self.beta > 1:
            raise ValueError(f"beta must be > 1, got {self.beta!r}")
        if not self.gamma > 1:
            raise ValueError(f"gamma must be > 1, got {self.gamma!r}")

    @property
    def huang_li_regime(self) -> bool:
        """``beta > 3/2`` and ``gamma < 4 beta - 3``: the time-uniform regime."""
        return self.beta > 1.5 and self.gamma < 4 * self.beta - 3


def pressure(rho: np.ndarray, p: Params) -> np.ndarray:
    _require_positive(rho)
    return np.power(rho, p.gamma)


def bulk_viscosity(rho: np.ndarray, p: Params) -> np.ndarray:
    _require_positive(rho)
    return np.power(rho, p.beta)


@dataclass(frozen=True)
class FluidState:
    """Conservative state ``(rho, m)`` at time ``t``.

    Arrays are copied and frozen on construction, so a state never changes
    after it is built.
    """

    grid: Grid
    t: float
    rho: np.ndarray
    m: np.ndarray

    def __post_init__(self) -> None:
        rho = np.array(self.rho, dtype=float)
        m = np.array(self.m, dtype=float)
        if rho.shape != self.grid.shape:
            raise ValueError(f"rho has shape {rho.shape}, expected {self.grid.shape}")
        if m.shape != (2, *self.grid.shape):
            raise ValueError(f"m has shape {m.shape}, expected (2, {self.grid.n}, {self.grid.n})")
        check_finite(m, "momentum")
        _require_positive(rho)
        rho.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "t", float(self.t))

    @property
    def u(self) -> np.ndarray:
        return self.m / self.rho

    @classmethod
    def from_velocity(cls, grid: Grid, t: float, rho: np.ndarray, u: np.ndarray) -> "FluidState":
        return cls(grid, t, rho, np.asarray(rho) * np.asarray(u))

    def with_time(self, t: float) -> "FluidState":
        return FluidState(self.grid, t, self.rho, self.m)


def mass(state: FluidState) -> float:
    return state.grid.integrate(state.rho)


def momentum(state: FluidState) -> tuple[float, float]:
    g = state.grid
    return g.integrate(state.m[0]), g.integrate(state.m[1])


def kinetic_energy(state: FluidState) -> float:
    return 0.5 * state.grid.integrate(np.sum(state.m * state.m, axis=0) / state.rho)


def energy(state: FluidState, p: Params) -> float:
    """Total energy: integral of ``rho |u|^2 / 2 + rho^gamma / (gamma - 1)``."""
    internal = state.grid.integrate(pressure(state.rho, p)) / (p.gamma - 1)
    return kinetic_energy(state) + internal


# -- initial data ---------------------------------------------------------------------

InitKind = Literal["constant-plus-mode", "random-band-limited", "mollified-target"]


@dataclass(frozen=True)
class InitConfig:
    """Recipe for initial data.

    kind
        ``constant-plus-mode``: ``rho = 1 + a sin(2 pi (j . x))`` and a shear
        velocity ``U (sin 2 pi x2, -sin 2 pi x1)``.
        ``random-band-limited``: ``rho`` is the exponential of a random
        band-limited field, ``u`` a random band-limited vector field.
        ``mollified-target``: a rough random target (full-band noise, or
        band-limited when ``target_band`` is set) smoothed by a Gaussian
        of width ``width``.
    rho_amplitude
        For ``constant-plus-mode`` and ``mollified-target`` the relative
        size of the density perturbation; for ``random-band-limited`` the
        sup norm of the log-density perturbation.
    rho_bounds
        ``(m, M)``; the generated density must satisfy ``m <= rho0 <= M``.
    """

    kind: InitKind = "constant-plus-mode"
    seed: int = 0
    rho_mean: float = 1.0
    rho_amplitude: float = 0.3
    u_amplitude: float = 0.0
    band: int = 4
    width: float = 0.0
    mode: tuple[int, int] = (1, 0)
    target_band: int | None = None
    rho_bounds: tuple[float, float] = (1e-12, math.inf)

    def __post_init__(self) -> None:
        if self.kind not in ("constant-plus-mode", "random-band-limited", "mollified-target"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if not self.rho_mean > 0:
            raise ValueError("rho_mean must be positive")
        lo, hi = self.rho_bounds
        if not 0 < lo < hi:
            raise ValueError(f"rho_bounds must satisfy 0 < m < M, got {self.rho_bounds!r}")
        if self.width < 0:
            raise ValueError("mollification width must be >= 0")


def _mollify(grid: Grid, f: np.ndarray, width: float) -> np.ndarray:
    if width == 0:
        return f
    k = 2 * np.pi * grid.modes
    ksq = k[:, None] ** 2 + k[None, :] ** 2
    kernel = np.exp(-0.5 * width**2 * ksq)
    return np.fft.ifft2(np.fft.fft2(f) * kernel).real


def initial_state(grid: Grid, cfg: InitConfig) -> FluidState:
    """Build normalised initial data: mass ``rho_mean`` and zero momentum."""
    rng = np.random.default_rng(cfg.seed)
    x1, x2 = grid.coords
    if cfg.kind == "constant-plus-mode":
        j1, j2 = cfg.mode
        rho = 1.0 + cfg.rho_amplitude * np.sin(2 * np.pi * (j1 * x1 + j2 * x2))
        u = cfg.u_amplitude * np.stack([np.sin(2 * np.pi * x2), -np.sin(2 * np.pi * x1)])
    elif cfg.kind == "random-band-limited":
        g = band_limited_noise(grid, rng, cfg.band, 3)
        rho = np.exp(cfg.rho_amplitude * g[0])
        u = cfg.u_amplitude * g[1:]
    else:
        if cfg.target_band is None:
            noise = rng.uniform(-1.0, 1.0, size=(3, *grid.shape))
            noise -= noise.mean(axis=(1, 2), keepdims=True)
        else:
            noise = band_limited_noise(grid, rng, cfg.target_band, 3)
        rho = 1.0 + cfg.rho_amplitude * _mollify(grid, noise[0], cfg.width)
        u = cfg.u_amplitude * np.stack([_mollify(grid, noise[c], cfg.width) for c in (1, 2)])

    rho = rho * (cfg.rho_mean / np.mean(rho))
    lo, hi = cfg.rho_bounds
    if rho.min() < lo or rho.max() > hi:
        raise ValueError(
            f"initial density range [{rho.min():.6g}, {rho.max():.6g}] "
            f"violates bounds [{lo:.6g}, {hi:.6g}]"
        )
    # zero total momentum: shift u by the mass-weighted mean velocity
    shift = np.mean(rho * u, axis=(1, 2)) / np.mean(rho)
    u = u - shift[:, None, None]
    return FluidState(grid, 0.0, rho, rho * u)
