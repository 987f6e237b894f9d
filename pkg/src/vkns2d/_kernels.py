"""Fused pointwise loops for the right-hand side evaluator.

Spectral arrays use the ``rfft2`` half layout ``(n, n // 2 + 1)``.
"""

from __future__ import annotations

import math

import numba
import numpy as np

OK, VACUUM, NONFINITE = 0, 1, 2

_jit = numba.njit(cache=True, error_model="numpy")
_jit_fast = numba.njit(cache=True, error_model="numpy", fastmath=True)


@_jit
def products(R, A, floor):
    """From ``R = [rho, m1, m2]`` fill ``A`` with m1 u1, m1 u2, m2 u2, u1, u2.

    Returns ``(status, flat_index)``; status is VACUUM for ``rho <= floor`` and
    NONFINITE for NaN/Inf anywhere in the state.
    """
    _, nx, ny = R.shape
    for i in range(nx):
        for j in range(ny):
            r = R[0, i, j]
            a = R[1, i, j]
            b = R[2, i, j]
            if not (math.isfinite(r) and math.isfinite(a) and math.isfinite(b)):
                return NONFINITE, i * ny + j
            if r <= floor:
                return VACUUM, i * ny + j
            inv = 1.0 / r
            u = a * inv
            v = b * inv
            A[0, i, j] = a * u
            A[1, i, j] = a * v
            A[2, i, j] = b * v
            A[3, i, j] = u
            A[4, i, j] = v
    return OK, -1


@_jit_fast
def divergence_and_gradsq(k1, k2, weight, scale, Ah, out):
    """``out = scale * i (k1 u1h + k2 u2h)`` with ``u1h, u2h = Ah[3], Ah[4]``.

    Returns the Parseval sum of ``|grad u|^2`` (unnormalised).
    """
    nx, ny = out.shape
    acc = 0.0
    for i in range(nx):
        for j in range(ny):
            a = k1[i, j]
            b = k2[i, j]
            u = Ah[3, i, j]
            v = Ah[4, i, j]
            out[i, j] = 1j * scale * (a * u + b * v)
            au = u.real * u.real + u.imag * u.imag
            av = v.real * v.real + v.imag * v.imag
            acc += weight[j] * (a * a + b * b) * (au + av)
    return acc


@_jit
def flux(R, lam, P, dv, A, mu, W):
    """``W = (lam + mu) div u - P`` plus the reductions the step rule needs.

    Returns ``(sum (lam + 2 mu) dv^2, sum dv^2, max |u|^2, max lam, min rho,
    max rho)``.
    """
    nx, ny = lam.shape
    s_visc = 0.0
    s_div = 0.0
    usq = 0.0
    lmax = 0.0
    rmin = np.inf
    rmax = 0.0
    for i in range(nx):
        for j in range(ny):
            lm = lam[i, j]
            d = dv[i, j]
            W[i, j] = (lm + mu) * d - P[i, j]
            s_visc += (lm + 2.0 * mu) * d * d
            s_div += d * d
            u = A[3, i, j]
            v = A[4, i, j]
            usq = max(usq, u * u + v * v)
            lmax = max(lmax, lm)
            r = R[0, i, j]
            rmin = min(rmin, r)
            rmax = max(rmax, r)
    return s_visc, s_div, usq, lmax, rmin, rmax


@_jit
def max_wave_speed(rho, P, A, gamma):
    """``max(|u| + sqrt(gamma P / rho))``."""
    nx, ny = rho.shape
    vmax = 0.0
    for i in range(nx):
        for j in range(ny):
            u = A[3, i, j]
            v = A[4, i, j]
            speed = math.sqrt(u * u + v * v) + math.sqrt(gamma * P[i, j] / rho[i, j])
            vmax = max(vmax, speed)
    return vmax


@_jit_fast
def assemble(k1, k2, ksq, mu, scale, Sh, Ah, Wh, L):
    """Spectral right-hand side.

    ``Sh`` is the normalised state spectrum; ``Ah`` and ``Wh`` are raw
    forward transforms, normalised here by ``scale``. ``k1``, ``k2`` and
    ``ksq`` already carry the 2/3-rule mask.
    """
    nx, ny = k1.shape
    for i in range(nx):
        for j in range(ny):
            a = k1[i, j]
            b = k2[i, j]
            c = mu * ksq[i, j]
            w = Wh[i, j]
            L[0, i, j] = -1j * (a * Sh[1, i, j] + b * Sh[2, i, j])
            L[1, i, j] = scale * (-1j * (a * Ah[0, i, j] + b * Ah[1, i, j] - a * w) - c * Ah[3, i, j])
            L[2, i, j] = scale * (-1j * (a * Ah[1, i, j] + b * Ah[2, i, j] - b * w) - c * Ah[4, i, j])


@_jit_fast
def axpy_combine(alpha, S0, beta, S1, dt, L, out):
    """``out = alpha S0 + beta (S1 + dt L)``."""
    c, nx, ny = S0.shape
    for q in range(c):
        for i in range(nx):
            for j in range(ny):
                out[q, i, j] = alpha * S0[q, i, j] + beta * (S1[q, i, j] + dt * L[q, i, j])
