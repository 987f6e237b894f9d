"""Fourier machinery on the unit torus [-1/2, 1/2]^2.

Real fields are plain ``(n, n)`` float arrays indexed ``[i1, i2]`` so that
axis 0 follows x1 and axis 1 follows x2. Vector fields are ``(2, n, n)``
arrays. A :class:`Grid` owns the wavenumber tables and exposes the
differential and singular-integral operators as Fourier multipliers.

Multiplier conventions
----------------------
* Odd symbols (first derivatives, single Riesz transforms, mixed
  ``R_i R_j``) vanish on the Nyquist row/column so real inputs map to real
  outputs.
* Even symbols (Laplacian, ``R_i R_i``, inverse Laplacian) keep the Nyquist
  modes, so ``R_1 R_1 + R_2 R_2 = -(Id - mean)`` holds on every mode.
* The mean mode is sent to zero by every negative-order operator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "NonFiniteFieldError",
    "SpectralField",
    "band_limited_noise",
    "check_finite",
]

logger = logging.getLogger(__name__)


class NonFiniteFieldError(ValueError):
    """Raised when a field handed to a spectral operator holds NaN or Inf."""


def check_finite(values: np.ndarray, what: str = "field") -> None:
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))
        raise NonFiniteFieldError(
            f"{what} has {len(bad)} non-finite value(s); first at index "
            f"{tuple(int(i) for i in bad[0])}: {values[tuple(bad[0])]!r}"
        )


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a field on ``grid``.

    ``coeffs[a, b]`` is the coefficient of ``exp(2 pi i (m1 x1 + m2 x2))``
    with ``(m1, m2) = (grid.modes[a], grid.modes[b])`` (numpy FFT ordering),
    normalised so the ``(0, 0)`` entry is the mean of the field.
    """

    grid: "Grid"
    coeffs: np.ndarray

    def coefficient(self, m1: int, m2: int) -> complex:
        n = self.grid.n
        return complex(self.coeffs[m1 % n, m2 % n])

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        c = self.coeffs
        flipped = np.conj(np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1)))
        return bool(np.allclose(c, flipped, rtol=0.0, atol=atol))


@dataclass(frozen=True)
class Grid:
    """Uniform ``n x n`` periodic grid on the unit torus.

    Nodes sit at ``x_j = -1/2 + j/n`` and the wavenumbers are
    ``k = 2 pi (m1, m2)`` with ``m`` in ``{-n/2, ..., n/2 - 1}``.
    """

    n: int

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or self.n % 2:
            raise ValueError(f"grid size must be an even integer >= 8, got {self.n!r}")

    # -- geometry -----------------------------------------------------------------

    @property
    def dx(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @cached_property
    def nodes(self) -> np.ndarray:
        return -0.5 + np.arange(self.n) / self.n

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x1, x2 = np.meshgrid(self.nodes, self.nodes, indexing="ij")
        return x1, x2

    # -- wavenumber tables ----------------------------------------------------------

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer mode numbers in FFT order."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(int)

    @cached_property
    def _half_modes(self) -> np.ndarray:
        # rfftfreq reports the Nyquist column as +n/2
        return np.fft.rfftfreq(self.n, 1.0 / self.n).astype(int)

    @cached_property
    def _k(self) -> tuple[np.ndarray, np.ndarray]:
        """Full (Nyquist-keeping) wavenumbers on the rfft half grid."""
        k1 = 2 * np.pi * self.modes[:, None] * np.ones((1, self.n // 2 + 1))
        k2 = 2 * np.pi * self._half_modes[None, :] * np.ones((self.n, 1))
        return k1, k2

    @cached_property
    def _k_odd(self) -> tuple[np.ndarray, np.ndarray]:
        """Wavenumbers with the Nyquist entries zeroed, for odd symbols."""
        k1, k2 = (k.copy() for k in self._k)
        k1[np.abs(self.modes) == self.n // 2, :] = 0.0
        k2[:, self._half_modes == self.n // 2] = 0.0
        return k1, k2

    @cached_property
    def _ksq(self) -> np.ndarray:
        k1, k2 = self._k
        return k1**2 + k2**2

    @cached_property
    def _inv_ksq(self) -> np.ndarray:
        ksq = self._ksq.copy()
        ksq[0, 0] = 1.0
        inv = 1.0 / ksq
        inv[0, 0] = 0.0
        return inv

    @cached_property
    def keep_mask(self) -> np.ndarray:
        """Full-spectrum 2/3-rule mask: ``max(|m1|, |m2|) <= n/3``."""
        m = np.abs(self.modes)
        return (m[:, None] <= self.n / 3) & (m[None, :] <= self.n / 3)

    @cached_property
    def _keep_half(self) -> np.ndarray:
        m1 = np.abs(self.modes)[:, None]
        m2 = np.abs(self._half_modes)[None, :]
        return (m1 <= self.n / 3) & (m2 <= self.n / 3)

    @cached_property
    def _phase(self) -> np.ndarray:
        # grid offset -1/2 contributes exp(i pi (m1 + m2)) = (-1)^(m1 + m2)
        s = np.where(self.modes % 2 == 0, 1.0, -1.0)
        return s[:, None] * s[None, :]

    # -- quadrature -----------------------------------------------------------------

    def integrate(self, f: np.ndarray) -> float:
        """Trapezoid rule on the torus; the domain has unit area."""
        return float(np.mean(f))

    def mean(self, f: np.ndarray) -> float:
        return self.integrate(f)

    def norm(self, f: np.ndarray, q: float = 2.0) -> float:
        """L^q norm of a scalar field, or of the pointwise Euclidean norm of a
        stacked field (first axis taken as components)."""
        a = np.abs(f) if f.ndim == 2 else np.sqrt(np.sum(f * f, axis=0))
        if np.isinf(q):
            return float(np.max(a))
        if q == 2:
            return float(np.sqrt(np.mean(a * a)))
        return float(np.mean(a**q) ** (1.0 / q))

    # -- transforms -----------------------------------------------------------------

    def to_spectral(self, f: np.ndarray) -> SpectralField:
        f = np.asarray(f, dtype=float)
        self._check_shape(f)
        check_finite(f)
        coeffs = sfft.fft2(f) / self.n**2 * self._phase
        return SpectralField(self, coeffs)

    def to_real(self, F: SpectralField) -> np.ndarray:
        if F.grid.n != self.n:
            raise ValueError(f"spectral field lives on n={F.grid.n}, grid has n={self.n}")
        return sfft.ifft2(F.coeffs * self._phase * self.n**2).real

    def dealias(self, F: SpectralField) -> SpectralField:
        """Zero every coefficient with ``max(|m1|, |m2|) > n/3``."""
        return SpectralField(F.grid, np.where(self.keep_mask, F.coeffs, 0.0))

    def truncate(self, f: np.ndarray) -> np.ndarray:
        """Real-space shortcut for ``to_real(dealias(to_spectral(f)))``."""
        return self._multiply(f, self._keep_half)

    def product(self, *fields: np.ndarray) -> np.ndarray:
        """Pointwise product followed by 2/3-rule truncation."""
        out = fields[0]
        for g in fields[1:]:
            out = out * g
        return self.truncate(out)

    def _check_shape(self, f: np.ndarray) -> None:
        if f.shape[-2:] != self.shape:
            raise ValueError(f"field shape {f.shape} does not match grid {self.shape}")

    def _multiply(self, f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        self._check_shape(f)
        check_finite(f)
        return sfft.irfft2(symbol * sfft.rfft2(f), s=self.shape)

    # -- differential operators ---------------------------------------------------------

    def derivative(self, f: np.ndarray, axis: int) -> np.ndarray:
        """Spectral partial derivative along x1 (``axis=1``) or x2 (``axis=2``)."""
        if axis not in (1, 2):
            raise ValueError(f"axis must be 1 or 2, got {axis!r}")
        return self._multiply(f, 1j * self._k_odd[axis - 1])

    def gradient(self, f: np.ndarray) -> np.ndarray:
        fh = sfft.rfft2(self._validated(f))
        k1, k2 = self._k_odd
        return np.stack([self._back(1j * k1 * fh), self._back(1j * k2 * fh)])

    def perp_gradient(self, f: np.ndarray) -> np.ndarray:
        """``(d2 f, -d1 f)``."""
        g = self.gradient(f)
        return np.stack([g[1], -g[0]])

    def divergence(self, v: np.ndarray) -> np.ndarray:
        k1, k2 = self._k_odd
        vh = sfft.rfft2(self._validated(v), axes=(-2, -1))
        return self._back(1j * (k1 * vh[0] + k2 * vh[1]))

    def rot(self, v: np.ndarray) -> np.ndarray:
        """``rot v = d2 v1 - d1 v2``."""
        k1, k2 = self._k_odd
        vh = sfft.rfft2(self._validated(v), axes=(-2, -1))
        return self._back(1j * (k2 * vh[0] - k1 * vh[1]))

    def jacobian(self, v: np.ndarray) -> np.ndarray:
        """``J[i, j] = d_j v_i`` as a ``(2, 2, n, n)`` array."""
        k1, k2 = self._k_odd
        vh = sfft.rfft2(self._validated(v), axes=(-2, -1))
        return np.stack(
            [np.stack([self._back(1j * k1 * vh[i]), self._back(1j * k2 * vh[i])]) for i in range(2)]
        )

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self._multiply(f, -self._ksq)

    def inv_laplacian_zero_mean(self, f: np.ndarray) -> np.ndarray:
        """Zero-mean solution ``g`` of ``laplacian(g) = f - mean(f)``."""
        f = self._validated(f)
        fbar = float(np.mean(f))
        scale = float(np.max(np.abs(f))) if f.size else 0.0
        if abs(fbar) > 1e-10 * max(scale, np.finfo(float).tiny):
            logger.warning("inv_laplacian_zero_mean: subtracting mean %.3e from input", fbar)
        return self._multiply(f, -self._inv_ksq)

    def inv_sqrt_neg_laplacian(self, f: np.ndarray) -> np.ndarray:
        """``(-Laplacian)^{-1/2}`` with the mean mode sent to zero."""
        return self._multiply(f, np.sqrt(self._inv_ksq))

    def riesz(self, i: int, f: np.ndarray) -> np.ndarray:
        """Single Riesz transform ``R_i = (-Laplacian)^{-1/2} d_i``."""
        self._check_index(i)
        return self._multiply(f, 1j * self._k_odd[i - 1] * np.sqrt(self._inv_ksq))

    def riesz_composition(self, i: int, j: int, f: np.ndarray) -> np.ndarray:
        """``R_i R_j f``, the multiplier ``-k_i k_j / |k|^2``."""
        return self._multiply(f, self.riesz_symbol(i, j))

    def riesz_symbol(self, i: int, j: int) -> np.ndarray:
        """Half-spectrum symbol of ``R_i R_j``."""
        self._check_index(i)
        self._check_index(j)
        k = self._k if i == j else self._k_odd
        return -k[i - 1] * k[j - 1] * self._inv_ksq

    # -- helpers ----------------------------------------------------------------------

    def _validated(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        self._check_shape(f)
        check_finite(f)
        return f

    def _back(self, fh: np.ndarray) -> np.ndarray:
        return sfft.irfft2(fh, s=self.shape)

    @staticmethod
    def _check_index(i: int) -> None:
        if i not in (1, 2):
            raise ValueError(f"Riesz index must be 1 or 2, got {i!r}")


def band_limited_noise(grid: Grid, rng: np.random.Generator, band: int, count: int) -> np.ndarray:
    """``count`` zero-mean real fields with Gaussian coefficients on
    ``max(|m1|, |m2|) <= band``, each scaled to unit sup norm."""
    n = grid.n
    if not 0 < band <= n // 2 - 1:
        raise ValueError(f"band must lie in [1, {n // 2 - 1}], got {band!r}")
    out = np.empty((count, n, n))
    a = np.abs(grid.modes)
    mask = (a[:, None] <= band) & (a[None, :] <= band)
    mask[0, 0] = False
    for c in range(count):
        coeffs = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * mask
        f = sfft.ifft2(coeffs).real
        out[c] = f / np.max(np.abs(f))
    return out
