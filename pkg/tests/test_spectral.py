import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vkns2d import Grid
from vkns2d.spectral import NonFiniteFieldError, band_limited_noise

from conftest import noise

seeds = st.integers(0, 2**31 - 1)


def direct_dft(f):
    """Coefficients by explicit summation over the nodes x_j = -1/2 + j/n."""
    n = f.shape[0]
    x = -0.5 + np.arange(n) / n
    m = np.fft.fftfreq(n, 1.0 / n)
    E = np.exp(-2j * np.pi * np.outer(m, x))
    return E @ f @ E.T / n**2


def test_grid_validation():
    for bad in (6, 7, 0, -8, 8.0):
        with pytest.raises(ValueError):
            Grid(bad)
    g = Grid(8)
    assert g.modes[0] == 0
    assert g.coords[0][0, 0] == -0.5


def test_constant_round_trip():
    g = Grid(16)
    F = g.to_spectral(np.full(g.shape, 3.0))
    c = F.coeffs.copy()
    assert c[0, 0] == pytest.approx(3.0, abs=1e-15)
    c[0, 0] = 0
    assert np.max(np.abs(c)) < 1e-15
    np.testing.assert_allclose(g.to_real(F), 3.0, atol=1e-15)


def test_sine_round_trip():
    g = Grid(16)
    f = np.sin(2 * np.pi * g.coords[0])
    assert np.max(np.abs(g.to_real(g.to_spectral(f)) - f)) <= 1e-12


def test_coefficients_match_direct_dft():
    g = Grid(8)
    f = noise(g, 11, band=2)[0] + 0.7
    F = g.to_spectral(f)
    np.testing.assert_allclose(F.coeffs, direct_dft(f), atol=1e-14)
    assert F.coefficient(0, 0) == pytest.approx(np.mean(f))
    assert F.is_hermitian()
    assert np.max(np.abs(g.to_real(F) - f)) <= 1e-12


def test_rejects_non_finite():
    g = Grid(8)
    f = np.zeros(g.shape)
    f[2, 3] = np.nan
    with pytest.raises(NonFiniteFieldError, match=r"\(2, 3\)"):
        g.to_spectral(f)
    with pytest.raises(NonFiniteFieldError):
        g.laplacian(f)


def test_derivative_single_mode():
    g = Grid(32)
    x1, x2 = g.coords
    d = g.derivative(np.sin(2 * np.pi * x1), 1)
    assert np.max(np.abs(d - 2 * np.pi * np.cos(2 * np.pi * x1))) <= 1e-10
    assert np.max(np.abs(g.derivative(np.sin(2 * np.pi * x1), 2))) <= 1e-12
    with pytest.raises(ValueError):
        g.derivative(x1, 3)


def test_gradient_of_constant():
    g = Grid(16)
    assert np.max(np.abs(g.gradient(np.full(g.shape, 2.5)))) == 0.0


def test_div_and_rot_of_shear():
    g = Grid(32)
    x1, x2 = g.coords
    u = np.stack([np.sin(2 * np.pi * x2), np.zeros(g.shape)])
    assert np.max(np.abs(g.divergence(u))) <= 1e-12
    # rot u = d2 u1 - d1 u2
    np.testing.assert_allclose(g.rot(u), 2 * np.pi * np.cos(2 * np.pi * x2), atol=1e-10)


def test_jacobian_layout():
    g = Grid(16)
    x1, x2 = g.coords
    v = np.stack([np.sin(2 * np.pi * x2), np.cos(2 * np.pi * x1)])
    J = g.jacobian(v)
    np.testing.assert_allclose(J[0, 1], 2 * np.pi * np.cos(2 * np.pi * x2), atol=1e-10)
    np.testing.assert_allclose(J[1, 0], -2 * np.pi * np.sin(2 * np.pi * x1), atol=1e-10)
    assert np.max(np.abs(J[0, 0])) < 1e-12 and np.max(np.abs(J[1, 1])) < 1e-12


def test_inv_laplacian_eigenfunction():
    g = Grid(32)
    x1 = g.coords[0]
    out = g.inv_laplacian_zero_mean(np.cos(2 * np.pi * x1))
    np.testing.assert_allclose(out, -np.cos(2 * np.pi * x1) / (4 * np.pi**2), atol=1e-14)
    assert np.max(np.abs(g.inv_laplacian_zero_mean(np.zeros(g.shape)))) == 0.0


def test_inv_laplacian_warns_on_mean(caplog):
    g = Grid(16)
    with caplog.at_level("WARNING"):
        out = g.inv_laplacian_zero_mean(np.ones(g.shape))
    assert "mean" in caplog.text
    assert np.max(np.abs(out)) == 0.0


def test_riesz_single_mode():
    g = Grid(32)
    s = np.sin(2 * np.pi * g.coords[0])
    np.testing.assert_allclose(g.riesz_composition(1, 1, s), -s, atol=1e-14)
    assert np.max(np.abs(g.riesz_composition(2, 2, s))) < 1e-14
    with pytest.raises(ValueError):
        g.riesz_composition(0, 1, s)


def test_dealias_definition():
    g = Grid(24)
    f = np.random.default_rng(0).standard_normal(g.shape)
    F = g.to_spectral(f)
    D = g.dealias(F)
    keep = g.keep_mask
    a = np.abs(g.modes)
    np.testing.assert_array_equal(keep, (a[:, None] <= 8) & (a[None, :] <= 8))
    np.testing.assert_array_equal(D.coeffs[keep], F.coeffs[keep])
    assert np.all(D.coeffs[~keep] == 0)
    np.testing.assert_array_equal(g.dealias(D).coeffs, D.coeffs)


def test_dealiased_product_closed_form():
    g = Grid(8)
    x1 = g.coords[0]
    s = np.sin(2 * np.pi * x1)
    exact = g.to_spectral((1 - np.cos(4 * np.pi * x1)) / 2).coeffs
    np.testing.assert_allclose(g.dealias(g.to_spectral(s * s)).coeffs, exact, atol=1e-15)
    np.testing.assert_allclose(g.product(s, s), (1 - np.cos(4 * np.pi * x1)) / 2, atol=1e-14)


def test_band_limited_noise_validation(g32):
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        band_limited_noise(g32, rng, 16, 1)
    f = band_limited_noise(g32, rng, 4, 2)
    assert f.shape == (2, 32, 32)
    np.testing.assert_allclose(np.max(np.abs(f), axis=(1, 2)), 1.0)
    assert abs(np.mean(f[0])) < 1e-15


# -- properties ------------------------------------------------------------------------


@given(seeds)
def test_round_trip_property(seed):
    g = Grid(32)
    f = noise(g, seed, band=10)[0]
    assert np.max(np.abs(g.to_real(g.to_spectral(f)) - f)) <= 1e-12


@given(seeds)
def test_parseval(seed):
    g = Grid(32)
    f = noise(g, seed, band=10)[0] + 0.3
    F = g.to_spectral(f)
    assert g.norm(f, 2) ** 2 == pytest.approx(np.sum(np.abs(F.coeffs) ** 2), rel=1e-10)


@given(seeds)
def test_riesz_sum_identity(seed):
    g = Grid(32)
    f = np.random.default_rng(seed).standard_normal(g.shape)
    s = g.riesz_composition(1, 1, f) + g.riesz_composition(2, 2, f)
    assert np.max(np.abs(s + f - f.mean())) <= 1e-12


@given(seeds)
def test_riesz_symmetric_and_commutes_with_derivative(seed):
    g = Grid(32)
    f = noise(g, seed, band=10)[0]
    a = g.riesz_composition(1, 2, f)
    assert np.max(np.abs(a - g.riesz_composition(2, 1, f))) <= 1e-12
    b = g.derivative(a, 1) - g.riesz_composition(1, 2, g.derivative(f, 1))
    assert np.max(np.abs(b)) <= 1e-10


@given(seeds)
def test_inverse_laplacian_is_inverse(seed):
    g = Grid(32)
    f = noise(g, seed, band=10)[0] + 2.0
    np.testing.assert_allclose(g.inv_laplacian_zero_mean(g.laplacian(f)), f - f.mean(), atol=1e-10)
    f0 = f - f.mean()
    np.testing.assert_allclose(g.laplacian(g.inv_laplacian_zero_mean(f0)), f0, atol=1e-10)


@given(seeds)
def test_vector_identities(seed):
    g = Grid(32)
    phi = noise(g, seed, band=10)[0]
    assert np.max(np.abs(g.rot(g.gradient(phi)))) <= 1e-12
    assert np.max(np.abs(g.divergence(g.perp_gradient(phi)))) <= 1e-12
    assert abs(np.mean(g.derivative(phi, 2))) <= 1e-15


@given(seeds, seeds)
def test_product_rule_on_resolved_modes(s1, s2):
    g = Grid(32)
    f = noise(g, s1, band=5)[0]
    h = noise(g, s2, band=5)[0]
    lhs = g.derivative(f * h, 1)
    rhs = f * g.derivative(h, 1) + h * g.derivative(f, 1)
    assert np.max(np.abs(lhs - rhs)) <= 1e-8


@given(seeds)
def test_truncate_matches_dealias(seed):
    g = Grid(24)
    f = np.random.default_rng(seed).standard_normal(g.shape)
    via = g.to_real(g.dealias(g.to_spectral(f)))
    np.testing.assert_allclose(g.truncate(f), via, atol=1e-13)
