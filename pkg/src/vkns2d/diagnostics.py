"""Functionals monitored along a trajectory.

Conventions: ``rot u = d2 u1 - d1 u2`` and ``perp_grad = (d2, -d1)``, so
that ``mu lap u + grad((lambda + mu) div u) - grad P = grad B + mu perp_grad rot u``.
All integrals are grid means (the torus has unit area).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .fluid import FluidState, Params, _require_positive, energy, mass, momentum

__all__ = [
    "DiagnosticsRecord",
    "ExponentSchedule",
    "Monitor",
    "bound_terms",
    "commutator_G",
    "desjardins_F",
    "effective_viscous_flux",
    "lemma_terms",
    "norms",
    "quantities_DYX",
    "record",
    "search_schedule",
    "theta",
]

TINY = 1e-300

DEFAULT_EPSILONS = (0.5, 0.2, 0.1, 0.05, 0.01)
DEFAULT_QS = (5, 8, 16, 32, 64)


# -- exponent bookkeeping -------------------------------------------------------------


@dataclass(frozen=True)
class ExponentSchedule:
    """Exponents of the ``log Y`` and commutator bounds for given ``(beta, gamma)``.

    ``epsilon`` in (0, 1) and ``q > 4`` are the free parameters; ``nu0`` is the
    moment exponent ceiling (at most 1/2).
    """

    beta: float
    gamma: float
    epsilon: float = 0.2
    q: float = 5.0
    nu0: float = 0.5

    def __post_init__(self) -> None:
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if not self.q > 4:
            raise ValueError(f"q must exceed 4, got {self.q!r}")
        if not 0 < self.nu0 <= 0.5:
            raise ValueError(f"nu0 must lie in (0, 1/2], got {self.nu0!r}")

    @property
    def varsigma(self) -> float:
        b, g = self.beta, self.gamma
        return 1 + b * self.epsilon + max(0.0, g - 2 * b, b - g - 2)

    @property
    def _tail(self) -> float:
        return (0.5 - 1 / self.q) * self.varsigma

    @property
    def alpha1(self) -> float:
        b, g, e, q = self.beta, self.gamma, self.epsilon, self.q
        return (b * e / 2 + abs(g - b) / 4) * (4 / q) + 1 - 1 / q + self._tail

    @property
    def alpha2(self) -> float:
        b, g, e, q = self.beta, self.gamma, self.epsilon, self.q
        return (b * e / 2 + max((g - b) / 2, 0.0)) * (4 / q) + 1 + self._tail

    @property
    def alpha3(self) -> float:
        b, g, q = self.beta, self.gamma, self.q
        return max(0.0, 3 * g / 4 - b) * (4 / q) + 1 - 1 / q + self._tail

    @property
    def alpha4(self) -> float:
        q, s = self.q, self.varsigma
        return max(0.5 + s / 2, 1 - 1 / (2 * q) + (0.25 - 1 / (2 * q)) * s)

    @property
    def worst(self) -> float:
        """``max(alpha1, alpha2 + varsigma / q, alpha3, alpha4)``."""
        return max(self.alpha1, self.alpha2 + self.varsigma / self.q, self.alpha3, self.alpha4)

    @property
    def admissible(self) -> bool:
        """Whether the exponents close the density bound: ``worst < beta``."""
        return self.worst < self.beta

    def nu(self, rho_hat: float) -> float:
        return rho_hat ** (-self.beta / 2) * self.nu0


def search_schedule(
    beta: float,
    gamma: float,
    epsilons: Sequence[float] = DEFAULT_EPSILONS,
    qs: Sequence[float] = DEFAULT_QS,
    nu0: float = 0.5,
) -> tuple[ExponentSchedule, bool]:
    """First admissible ``(epsilon, q)``: smaller ``q`` first, then larger ``epsilon``.

    When no pair is admissible the one with the smallest ``worst - beta`` is
    returned together with ``False``.
    """
    best = None
    for q in sorted(qs):
        for eps in sorted(epsilons, reverse=True):
            s = ExponentSchedule(beta, gamma, eps, q, nu0)
            if s.admissible:
                return s, True
            if best is None or s.worst < best.worst:
                best = s
    if best is None:
        raise ValueError("empty schedule grid")
    return best, False


# -- pointwise functionals ----------------------------------------------------------------


def theta(rho: np.ndarray, p: Params) -> np.ndarray:
    """``2 mu log rho + rho**beta / beta``."""
    _require_positive(rho)
    return 2 * p.mu * np.log(rho) + np.power(rho, p.beta) / p.beta


def effective_viscous_flux(state: FluidState, p: Params) -> np.ndarray:
    """``B = (lambda + 2 mu) div u - (P - mean P)``."""
    g = state.grid
    rho = state.rho
    P = np.power(rho, p.gamma)
    return (np.power(rho, p.beta) + 2 * p.mu) * g.divergence(state.u) - (P - g.mean(P))


def desjardins_F(state: FluidState, p: Params) -> np.ndarray:
    """``theta(rho) - (-lap)^{-1} div(rho u)``."""
    g = state.grid
    # (-lap)^{-1} = -inv_laplacian_zero_mean
    return theta(state.rho, p) + g.inv_laplacian_zero_mean(g.divergence(state.m))


def commutator_G(state: FluidState, route: str = "A") -> np.ndarray:
    """``sum_ij [u_i, R_i R_j](rho u_j)``.

    Route ``"A"`` applies the composed multipliers ``R_i R_j`` directly;
    route ``"B"`` builds the operators from single Riesz transforms in the
    grouped form ``u . R grad-div(rho u) - R div R div(rho u (x) u)``.
    """
    g = state.grid
    u = state.u
    m = state.m
    if route == "A":
        out = np.zeros(g.shape)
        for i in (1, 2):
            for j in (1, 2):
                out += u[i - 1] * g.riesz_composition(i, j, m[j - 1])
                out -= g.riesz_composition(i, j, u[i - 1] * m[j - 1])
        return out
    if route == "B":
        # (-lap)^{-1/2} div (rho u), then (-lap)^{-1/2} grad of it
        s = g.inv_sqrt_neg_laplacian(g.divergence(m))
        first = sum(u[i - 1] * g.riesz(i, s) for i in (1, 2))
        # inner (-lap)^{-1/2} div of each row of rho u (x) u
        rows = np.stack(
            [g.inv_sqrt_neg_laplacian(g.divergence(np.stack([m[i] * u[0], m[i] * u[1]]))) for i in range(2)]
        )
        second = sum(g.riesz(i, rows[i - 1]) for i in (1, 2))
        return first - second
    raise ValueError(f"route must be 'A' or 'B', got {route!r}")


def quantities_DYX(state: FluidState, p: Params) -> tuple[float, float, float]:
    """``(D^2, Y^2, X^2)``."""
    g = state.grid
    rho = state.rho
    _require_positive(rho)
    u = state.u
    lam2 = np.power(rho, p.beta) + 2 * p.mu
    dv = g.divergence(u)
    rot = g.rot(u)
    P = np.power(rho, p.gamma)
    B = lam2 * dv - (P - g.mean(P))
    D2 = g.integrate(lam2 * dv**2 + p.mu * rot**2)
    Y2 = g.integrate(p.mu * rot**2 + B**2 / lam2)
    V = g.gradient(B) + p.mu * g.perp_gradient(rot)
    X2 = g.integrate(np.sum(V * V, axis=0) / rho)
    return D2, Y2, X2


def norms(
    state: FluidState,
    q_list: Iterable[float] = (),
    p_list: Iterable[float] = (),
    nu: float = 0.5,
) -> dict:
    """``grad_u_L2``, ``grad_u_Lq``, ``rho_Lp``, ``u_mean`` and the moment
    ``weighted_moment`` = integral of ``rho |u|**(2 + nu)``."""
    g = state.grid
    u = state.u
    J = g.jacobian(u).reshape(4, *g.shape)
    speed = np.sqrt(np.sum(u * u, axis=0))
    return {
        "grad_u_L2": g.norm(J, 2),
        "grad_u_Lq": {q: g.norm(J, q) for q in q_list},
        "rho_Lp": {pp: g.norm(state.rho, pp) for pp in p_list},
        "u_mean": (g.integrate(u[0]), g.integrate(u[1])),
        "weighted_moment": g.integrate(state.rho * speed ** (2 + nu)),
    }


# -- bound terms ----------------------------------------------------------------------------


def lemma_terms(rho_max: float, D: float, X2: float, Y2: float, p: Params, eps: float, q: float) -> tuple[float, ...]:
    """Constant-free right-hand side of the ``||grad u||_{L^q}`` bound.

    ``rho_max`` is the instantaneous sup of the density. For ``q == 2`` the
    bound has two terms, ``Y`` and a pressure term; for ``q > 2`` three.
    """
    b, g = p.beta, p.gamma
    if q == 2:
        return (math.sqrt(Y2), rho_max ** max(0.0, g / 2 - b))
    e1 = b * eps / 2 + max(0.0, (g - b) / 2) * 2 / q + max(0.0, (b - g) / 2) * (1 - 2 / q)
    e2 = b * eps / 2 + 0.5 - 1 / q + max(0.0, (g - b) / 2)
    e3 = max(0.0, (q - 1) * g / q - b)
    t1 = rho_max**e1 * (1 + D)
    t2 = rho_max**e2 * (1 + D) * (X2 / (10 + Y2)) ** (0.5 - 1 / q)
    t3 = rho_max**e3
    return (t1, t2, t3)


def _g_denominator(rho_hat: float, D: float, X2: float, Y2: float, s: ExponentSchedule) -> float:
    q = s.q
    a = D ** (2 - 2 / q) + D ** (2 - 6 / q)
    return (
        rho_hat**s.alpha1 * a
        + rho_hat**s.alpha2 * a * (X2 / (10 + Y2)) ** (1 / q)
        + rho_hat**s.alpha3 * D ** (2 - 6 / q)
    )


def bound_terms(
    state: FluidState,
    p: Params,
    sched: ExponentSchedule,
    rho_hat: float,
    q_list: Iterable[float] = (),
    *,
    pieces: dict | None = None,
) -> dict:
    """Structural bound terms and the ratios built from them.

    Returns ``lemma`` (per ``q`` the bound terms for ``||grad u||_{L^q}``),
    ``ratio_logY``, ``ratio_G`` and ``ratio_umean``. Denominators are
    floored at 1e-300 and a state at rest reports every ratio as 0.
    ``pieces`` may carry already computed ``D2, Y2, X2, G_Linf, grad_u_L2,
    u_mean`` to avoid recomputation.
    """
    pc = dict(pieces or {})
    if not {"D2", "Y2", "X2"} <= pc.keys():
        pc["D2"], pc["Y2"], pc["X2"] = quantities_DYX(state, p)
    if "G_Linf" not in pc:
        pc["G_Linf"] = float(np.max(np.abs(commutator_G(state))))
    if not {"grad_u_L2", "u_mean"} <= pc.keys():
        nm = norms(state)
        pc["grad_u_L2"], pc["u_mean"] = nm["grad_u_L2"], nm["u_mean"]
    D2, Y2, X2 = pc["D2"], pc["Y2"], pc["X2"]
    D = math.sqrt(max(D2, 0.0))
    rho_max = float(np.max(state.rho))
    lemma = {q: lemma_terms(rho_max, D, X2, Y2, p, sched.epsilon, q) for q in q_list}
    if not np.any(state.m):
        return {"lemma": lemma, "ratio_logY": 0.0, "ratio_G": 0.0, "ratio_umean": 0.0}
    gu2 = pc["grad_u_L2"]
    ratio_logY = math.log(10 + gu2**2) / max(rho_hat**sched.varsigma, TINY)
    ratio_G = pc["G_Linf"] / max(_g_denominator(rho_hat, D, X2, Y2, sched), TINY)
    ratio_umean = math.hypot(*pc["u_mean"]) / max(gu2, TINY)
    return {"lemma": lemma, "ratio_logY": ratio_logY, "ratio_G": ratio_G, "ratio_umean": ratio_umean}


# -- records and trajectory monitor ---------------------------------------------------------


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Everything monitored at one output time."""

    t: float
    E: float
    mass: float
    momentum: tuple[float, float]
    D2: float
    Y2: float
    X2: float
    B_L2: float
    B_bar: float
    P_bar: float
    G_Linf: float
    F_minmax: tuple[float, float]
    theta_min: float
    rho_min: float
    rho_max: float
    rho_hat: float
    grad_u_L2: float
    grad_u_Lq: dict = field(default_factory=dict)
    rho_Lp: dict = field(default_factory=dict)
    weighted_moment: float = 0.0
    u_mean: tuple[float, float] = (0.0, 0.0)
    ratio_logY: float = 0.0
    ratio_G: float = 0.0
    ratio_umean: float = 0.0
    lemma: dict = field(default_factory=dict)
    dissipation: float = 0.0
    int_PP: float = 0.0
    int_XY: float = 0.0
    rho_dev_L2: float = 0.0

    def finite(self) -> bool:
        scalars = [
            self.t, self.E, self.mass, *self.momentum, self.D2, self.Y2, self.X2, self.B_L2,
            self.B_bar, self.P_bar, self.G_Linf, *self.F_minmax, self.theta_min, self.rho_min,
            self.rho_max, self.rho_hat, self.grad_u_L2, *self.grad_u_Lq.values(),
            *self.rho_Lp.values(), self.weighted_moment, *self.u_mean, self.ratio_logY,
            self.ratio_G, self.ratio_umean, self.dissipation, self.int_PP, self.int_XY,
            self.rho_dev_L2,
        ]
        return all(math.isfinite(x) for x in scalars)


def record(
    state: FluidState,
    p: Params,
    sched: ExponentSchedule,
    rho_hat: float = 0.0,
    q_list: Sequence[float] = (),
    p_list: Sequence[float] = (),
) -> DiagnosticsRecord:
    """Diagnostics of a single state; ``rho_hat`` is the running sup before it."""
    g = state.grid
    rho = state.rho
    rho_max = float(np.max(rho))
    rho_hat = max(rho_hat, rho_max)
    D2, Y2, X2 = quantities_DYX(state, p)
    B = effective_viscous_flux(state, p)
    G = commutator_G(state)
    F = desjardins_F(state, p)
    nm = norms(state, q_list, p_list, sched.nu(rho_hat))
    G_Linf = float(np.max(np.abs(G)))
    bt = bound_terms(
        state, p, sched, rho_hat, q_list,
        pieces={"D2": D2, "Y2": Y2, "X2": X2, "G_Linf": G_Linf,
                "grad_u_L2": nm["grad_u_L2"], "u_mean": nm["u_mean"]},
    )
    mx, my = momentum(state)
    return DiagnosticsRecord(
        t=state.t,
        E=energy(state, p),
        mass=mass(state),
        momentum=(mx, my),
        D2=D2,
        Y2=Y2,
        X2=X2,
        B_L2=g.norm(B, 2),
        B_bar=g.mean(B),
        P_bar=g.mean(np.power(rho, p.gamma)),
        G_Linf=G_Linf,
        F_minmax=(float(F.min()), float(F.max())),
        theta_min=float(theta(rho, p).min()),
        rho_min=float(rho.min()),
        rho_max=rho_max,
        rho_hat=rho_hat,
        grad_u_L2=nm["grad_u_L2"],
        grad_u_Lq=nm["grad_u_Lq"],
        rho_Lp=nm["rho_Lp"],
        weighted_moment=nm["weighted_moment"],
        u_mean=nm["u_mean"],
        ratio_logY=bt["ratio_logY"],
        ratio_G=bt["ratio_G"],
        ratio_umean=bt["ratio_umean"],
        lemma=bt["lemma"],
        rho_dev_L2=g.norm(rho - g.mean(rho), 2),
    )


class Monitor:
    """Observer for :func:`vkns2d.dynamics.simulate` that builds a record series.

    Carries the running sup ``rho_hat`` (over output samples only) and the
    cumulative integrals of ``||P - P_bar||^2`` and ``X^2 / (10 + Y^2)``,
    accumulated by the trapezoid rule between samples; ``prev`` is the last
    ``(t, ||P - P_bar||^2, X^2 / (10 + Y^2))`` of a run being resumed, so
    that re-observing the restart sample adds nothing. The dissipation
    integral comes from the time stepper, which accumulates it every step.
    """

    def __init__(
        self,
        p: Params,
        sched: ExponentSchedule | None = None,
        q_list: Sequence[float] = (),
        p_list: Sequence[float] = (),
        *,
        rho_hat: float = 0.0,
        int_PP: float = 0.0,
        int_XY: float = 0.0,
        prev: tuple[float, float, float] | None = None,
        callback=None,
    ):
        self.params = p
        self.sched = sched if sched is not None else search_schedule(p.beta, p.gamma)[0]
        self.q_list = tuple(q_list)
        self.p_list = tuple(p_list)
        self.rho_hat = rho_hat
        self.int_PP = int_PP
        self.int_XY = int_XY
        self.records: list[DiagnosticsRecord] = []
        self.callback = callback
        self._prev = prev

    def __call__(self, sample) -> None:
        state = sample.state
        rec = record(state, self.params, self.sched, self.rho_hat, self.q_list, self.p_list)
        g = state.grid
        P = np.power(state.rho, self.params.gamma)
        pp = g.integrate((P - g.mean(P)) ** 2)
        xy = rec.X2 / (10 + rec.Y2)
        if self._prev is not None:
            t0, pp0, xy0 = self._prev
            dt = rec.t - t0
            self.int_PP += 0.5 * dt * (pp0 + pp)
            self.int_XY += 0.5 * dt * (xy0 + xy)
        self._prev = (rec.t, pp, xy)
        self.rho_hat = rec.rho_hat
        rec = replace(rec, dissipation=sample.dissipation, int_PP=self.int_PP, int_XY=self.int_XY)
        self.records.append(rec)
        if self.callback is not None:
            self.callback(rec, sample)

    def resume_point(self) -> dict:
        """Carried quantities needed to continue the series after a restart."""
        prev = self._prev
        return {
            "rho_hat": self.rho_hat,
            "int_PP": self.int_PP,
            "int_XY": self.int_XY,
            "prev": prev,
        }
