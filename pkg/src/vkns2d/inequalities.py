"""Empirical ratios for the functional inequalities used in the analysis.

Each ratio divides the left-hand side of an inequality by its right-hand
side with the unknown constant removed. Sweeps over random band-limited
fields report the empirical sup, which should be finite and stable when
the sample doubles. Nothing here asserts a particular constant.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np

from .spectral import Grid, band_limited_noise

__all__ = [
    "LabConfig",
    "RatioReport",
    "brezis_wainger_ratio",
    "calibrate_trudinger",
    "commutator_ratio",
    "desjardins_ratio",
    "divcurl_identity",
    "gns_ratio",
    "random_field",
    "run_lab",
    "trudinger_integral",
]

FieldKind = Literal["scalar", "vector", "positive-scalar"]

TRUDINGER_C1 = (1 / (4 * math.pi), 1 / (2 * math.pi), 1 / math.pi, 2 / math.pi)


@lru_cache(maxsize=8)
def _grid(n: int) -> Grid:
    return Grid(n)


def _grid_of(f: np.ndarray) -> Grid:
    return _grid(f.shape[-1])


def random_field(seed: int, band: int = 8, kind: FieldKind = "scalar", n: int = 64, amplitude: float = 1.0) -> np.ndarray:
    """Reproducible random band-limited field.

    ``scalar`` and ``vector`` fields have zero mean and sup norm
    ``amplitude`` (per component). ``positive-scalar`` is
    ``exp(amplitude * g)`` for a band-limited ``g``, rescaled to unit mass.
    """
    if not 0 < band <= n // 3:
        raise ValueError(f"band must lie in [1, n/3] = [1, {n // 3}], got {band!r}")
    g = _grid(n)
    rng = np.random.default_rng(seed)
    if kind == "scalar":
        return amplitude * band_limited_noise(g, rng, band, 1)[0]
    if kind == "vector":
        return amplitude * band_limited_noise(g, rng, band, 2)
    if kind == "positive-scalar":
        r = np.exp(amplitude * band_limited_noise(g, rng, band, 1)[0])
        return r / np.mean(r)
    raise ValueError(f"unknown field kind {kind!r}")


def _grad_l2(g: Grid, f: np.ndarray) -> float:
    """``||grad f||_{L^2}`` for a scalar or vector field."""
    return g.norm(_grad_field(g, f), 2)


def _grad_field(g: Grid, f: np.ndarray) -> np.ndarray:
    """Stacked gradient components of a scalar (2, n, n) or vector (4, n, n) field."""
    if f.ndim == 2:
        return g.gradient(f)
    return g.jacobian(f).reshape(4, *g.shape)


def gns_ratio(f: np.ndarray, q: float) -> float:
    """``||f||_q / (sqrt(q) ||f||_2^{2/q} ||f||_{H^1}^{1 - 2/q})``."""
    if not q > 2:
        raise ValueError(f"q must exceed 2, got {q!r}")
    if not np.any(f):
        raise ValueError("gns_ratio: zero field")
    g = _grid_of(f)
    l2 = g.norm(f, 2)
    h1 = math.sqrt(l2**2 + _grad_l2(g, f) ** 2)
    return g.norm(f, q) / (math.sqrt(q) * l2 ** (2 / q) * h1 ** (1 - 2 / q))


def divcurl_identity(f: np.ndarray, q: float = 2) -> float:
    """For ``q == 2`` the relative residual of
    ``||grad f||^2 = ||div f||^2 + ||rot f||^2``; otherwise the ratio
    ``||grad f||_q / (||div f||_q + ||rot f||_q)``."""
    g = _grid_of(f)
    grad = _grad_field(g, f)
    gn = g.norm(grad, q)
    if gn == 0:
        raise ValueError("divcurl_identity: zero gradient")
    dv = g.divergence(f)
    rt = g.rot(f)
    if q == 2:
        return abs(gn**2 - g.norm(dv, 2) ** 2 - g.norm(rt, 2) ** 2) / gn**2
    return gn / (g.norm(dv, q) + g.norm(rt, q))


def brezis_wainger_ratio(f: np.ndarray, q: float) -> float:
    """``||f||_inf / (||grad f||_2 sqrt(log(e + ||grad f||_q)) + ||f||_2 + 1)``."""
    if not q > 2:
        raise ValueError(f"q must exceed 2, got {q!r}")
    g = _grid_of(f)
    grad = g.gradient(f)
    den = g.norm(grad, 2) * math.sqrt(math.log(math.e + g.norm(grad, q))) + g.norm(f, 2) + 1
    return g.norm(f, math.inf) / den


def trudinger_integral(f: np.ndarray, c1: float) -> float:
    """Integral of ``exp(|f - mean f|^2 / (c1 ||grad f||_2^2))``."""
    g = _grid_of(f)
    gn2 = _grad_l2(g, f) ** 2
    if gn2 == 0:
        raise ValueError("trudinger_integral: constant field")
    d = f - np.mean(f)
    return g.integrate(np.exp(d * d / (c1 * gn2)))


def _commutator(g: Grid, a: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``sum_ij [a_j, R_i R_j] f_i``."""
    out = np.zeros(g.shape)
    for i in (1, 2):
        for j in (1, 2):
            out += a[j - 1] * g.riesz_composition(i, j, f[i - 1])
            out -= g.riesz_composition(i, j, a[j - 1] * f[i - 1])
    return out


def commutator_ratio(
    a: np.ndarray, f: np.ndarray, q: float = 2, triple: tuple[float, float, float] = (4, 4, 2)
) -> tuple[float, float]:
    """``(||C||_q / (||grad a||_2 ||f||_q), ||grad C||_{r3} / (||grad a||_{r1} ||f||_{r2}))``
    for the commutator ``C = sum_ij [a_j, R_i R_j] f_i``.

    ``||grad a||_2`` stands in for the BMO norm of ``a``. A vanishing
    commutator reports ``(0, 0)``.
    """
    if not 1 < q < math.inf:
        raise ValueError(f"q must lie in (1, inf), got {q!r}")
    g = _grid_of(f)
    C = _commutator(g, a, f)
    if not np.any(np.abs(C) > 1e-14 * max(1.0, float(np.max(np.abs(f))))):
        return 0.0, 0.0
    ga = _grad_field(g, a)
    d1 = g.norm(ga, 2) * g.norm(f, q)
    r1, r2, r3 = triple
    d2 = g.norm(ga, r1) * g.norm(f, r2)
    if d1 == 0 or d2 == 0:
        raise ValueError("commutator_ratio: zero multiplier gradient or zero field")
    return g.norm(C, q) / d1, g.norm(g.gradient(C), r3) / d2


def desjardins_ratio(rho: np.ndarray, u: np.ndarray, q: float, gamma: float) -> float:
    """``||rho^{1/(2q)} u||_{2q}^q`` over
    ``||sqrt(rho) u||_2 ||grad u||_2^{q-1} log(2 + ||grad u||_2^2 ||rho||_gamma / ||sqrt(rho) u||_2^2)^{(q-1)/2}
    + ||sqrt(rho) u||_2 |mean u|^{q-1}``."""
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q!r}")
    if np.any(rho <= 0):
        raise ValueError("desjardins_ratio: density must be positive")
    if not np.any(u):
        raise ValueError("desjardins_ratio: zero velocity")
    g = _grid_of(rho)
    speed2 = np.sum(u * u, axis=0)
    lhs = math.sqrt(g.integrate(rho * speed2**q))
    ru = math.sqrt(g.integrate(rho * speed2))
    gu = _grad_l2(g, u)
    mean_u = math.hypot(g.integrate(u[0]), g.integrate(u[1]))
    log_term = math.log(2 + gu**2 * g.norm(rho, gamma) / ru**2)
    den = ru * gu ** (q - 1) * log_term ** ((q - 1) / 2) + ru * mean_u ** (q - 1)
    return lhs / den


# -- sweeps -----------------------------------------------------------------------------


@dataclass(frozen=True)
class RatioReport:
    """Empirical sup and mean of one ratio over a seed sample.

    ``sup_half`` is the sup over the first half of the seeds, so that
    ``drift`` measures the change when the sample size doubles.
    """

    name: str
    samples: int
    params: dict
    sup: float
    mean: float
    argmax_seed: int
    sup_half: float

    @property
    def drift(self) -> float:
        if self.sup_half == 0:
            return 0.0 if self.sup == 0 else math.inf
        return abs(self.sup - self.sup_half) / self.sup_half

    @property
    def finite(self) -> bool:
        return math.isfinite(self.sup) and math.isfinite(self.mean)


@dataclass(frozen=True)
class LabConfig:
    """Settings of an inequality sweep; ``seeds`` is the base sample size
    (the sweep evaluates ``2 * seeds`` to measure doubling stability)."""

    n: int = 64
    band: int = 8
    seeds: int = 1000
    seed0: int = 0
    gns_qs: tuple[float, ...] = (4, 8, 16, 32, 64)
    divcurl_q: float = 4
    bw_q: float = 4
    commutator_q: float = 2
    triple: tuple[float, float, float] = (4, 4, 2)
    desjardins_qs: tuple[float, ...] = (2, 4, 8)
    gamma: float = 2.0
    trudinger_c1: tuple[float, ...] = TRUDINGER_C1
    rho_amplitude: float = 0.5
    drift_tol: float = 0.10
    trudinger_drift_tol: float = 0.05
    gns_spread: float = 2.0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if not 0 < self.band <= self.n // 3:
            raise ValueError(f"band must lie in [1, n/3], got {self.band!r}")


def lab_sample(seed: int, cfg: LabConfig) -> dict[str, float]:
    """Every ratio of the lab evaluated on the fields drawn from ``seed``."""
    f = random_field(seed, cfg.band, "scalar", cfg.n)
    v = random_field(seed, cfg.band, "vector", cfg.n)
    a = random_field(seed + 10**9, cfg.band, "vector", cfg.n)
    rho = random_field(seed, cfg.band, "positive-scalar", cfg.n, cfg.rho_amplitude)
    # constant part of u: uniform radius in [0, 1), uniform direction; a
    # bounded law keeps the sup over the ensemble finite
    r, phi = np.random.default_rng([seed, 7]).uniform(0.0, 1.0, size=2)
    shift = r * np.array([math.cos(2 * math.pi * phi), math.sin(2 * math.pi * phi)])
    u = v + shift[:, None, None]
    out = {f"gns[q={q:g}]": gns_ratio(f, q) for q in cfg.gns_qs}
    out[f"divcurl[q={cfg.divcurl_q:g}]"] = divcurl_identity(v, cfg.divcurl_q)
    out["divcurl-residual"] = divcurl_identity(v, 2)
    out[f"brezis-wainger[q={cfg.bw_q:g}]"] = brezis_wainger_ratio(f, cfg.bw_q)
    for c1 in cfg.trudinger_c1:
        out[f"trudinger[c1={c1:.6g}]"] = trudinger_integral(f, c1)
    c_q, c_r = commutator_ratio(a, v, cfg.commutator_q, cfg.triple)
    out[f"commutator[q={cfg.commutator_q:g}]"] = c_q
    out["commutator[r={:g},{:g},{:g}]".format(*cfg.triple)] = c_r
    for q in cfg.desjardins_qs:
        out[f"desjardins[q={q:g}]"] = desjardins_ratio(rho, u, q, cfg.gamma)
    return out


def _chunk(args: tuple[list[int], LabConfig]) -> list[dict[str, float]]:
    seeds, cfg = args
    return [lab_sample(s, cfg) for s in seeds]


def _evaluate(cfg: LabConfig) -> tuple[list[int], list[dict[str, float]]]:
    seeds = list(range(cfg.seed0, cfg.seed0 + 2 * cfg.seeds))
    if cfg.jobs <= 1:
        return seeds, _chunk((seeds, cfg))
    size = math.ceil(len(seeds) / cfg.jobs)
    parts = [seeds[i : i + size] for i in range(0, len(seeds), size)]
    with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
        rows = [r for chunk in pool.map(_chunk, [(p, cfg) for p in parts]) for r in chunk]
    return seeds, rows


def _report(name: str, seeds: Sequence[int], values: np.ndarray, half: int, params: dict) -> RatioReport:
    k = int(np.argmax(values))
    return RatioReport(
        name=name,
        samples=len(values),
        params=params,
        sup=float(values[k]),
        mean=float(np.mean(values)),
        argmax_seed=int(seeds[k]),
        sup_half=float(np.max(values[:half])),
    )


@dataclass
class LabResult:
    """Reports plus the pass/fail checks derived from them."""

    reports: list[RatioReport]
    checks: dict[str, bool] = field(default_factory=dict)
    trudinger_c1: float | None = None
    trudinger_c2: float | None = None

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def report(self, name: str) -> RatioReport:
        for r in self.reports:
            if r.name == name:
                return r
        raise KeyError(name)


def calibrate_trudinger(reports: Sequence[RatioReport], drift_tol: float = 0.05) -> tuple[float | None, float | None]:
    """Smallest ``c1`` whose sup integral is finite and stable within
    ``drift_tol`` under sample doubling; returns ``(c1, c2 = that sup)``."""
    rows = sorted((r.params["c1"], r) for r in reports if r.name.startswith("trudinger"))
    for c1, r in rows:
        if r.finite and r.drift < drift_tol:
            return c1, r.sup
    return None, None


def exact_cases(n: int = 64) -> dict[str, float]:
    """Residuals of the exactly known cases (all should vanish)."""
    g = _grid(n)
    x1, _ = g.coords
    c = np.full(g.shape, 3.0)
    res = {f"gns-constant[q={q}]": abs(gns_ratio(c, q) - 1 / math.sqrt(q)) for q in (4, 8, 16, 32, 64)}
    u = np.stack([np.full(g.shape, 0.7), np.full(g.shape, -0.4)])
    res["desjardins-constant"] = abs(desjardins_ratio(np.full(g.shape, 2.5), u, 3, 2.0) - 1)
    phi = np.sin(2 * np.pi * x1)
    res["divcurl-gradient"] = divcurl_identity(g.gradient(phi), 2)
    res["divcurl-solenoidal"] = divcurl_identity(g.perp_gradient(phi), 2)
    return res


def run_lab(cfg: LabConfig | None = None) -> LabResult:
    """Evaluate every ratio on ``2 * cfg.seeds`` seeds and check finiteness,
    doubling stability, the spread of the GNS sup across ``q`` and the
    exact cases."""
    cfg = cfg or LabConfig()
    seeds, rows = _evaluate(cfg)
    half = cfg.seeds
    reports = []
    for name in rows[0]:
        values = np.array([r[name] for r in rows])
        params: dict = {}
        if name.startswith("trudinger"):
            params["c1"] = float(name.split("=")[1].rstrip("]"))
        elif "[q=" in name:
            params["q"] = float(name.split("=")[1].rstrip("]"))
        if name.startswith("desjardins"):
            params["gamma"] = cfg.gamma
        if name.startswith("commutator[r"):
            params["triple"] = cfg.triple
        reports.append(_report(name, seeds, values, half, params))
    res = LabResult(reports)
    for r in reports:
        if r.name == "divcurl-residual":
            res.checks["divcurl-residual<=1e-12"] = r.sup <= 1e-12
            continue
        tol = cfg.trudinger_drift_tol if r.name.startswith("trudinger") else cfg.drift_tol
        res.checks[f"{r.name} finite"] = r.finite
        if not r.name.startswith("trudinger"):
            res.checks[f"{r.name} drift<{tol:g}"] = r.drift < tol
    c1, c2 = calibrate_trudinger(reports, cfg.trudinger_drift_tol)
    res.trudinger_c1, res.trudinger_c2 = c1, c2
    res.checks["trudinger calibrated"] = c1 is not None
    gns = [r.sup for r in reports if r.name.startswith("gns")]
    res.checks[f"gns spread<{cfg.gns_spread:g}x"] = max(gns) / min(gns) < cfg.gns_spread
    for name, value in exact_cases(cfg.n).items():
        res.checks[f"{name} exact"] = value <= 1e-12
    return res
