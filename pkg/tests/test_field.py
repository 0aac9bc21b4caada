import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate

from heatlab.field import (DiffusionMatrix, Grid, ScalarField, SingularModeError, TimeGrid, VectorField,
                           axis_power_average, frac_power, frac_power_symbol, gaussian_kernel,
                           gaussian_on_grid, heat_mollify, radial_sample, sobolev_norm,
                           spectral_gradient, spectral_laplacian)

G2 = Grid(2, 32, math.pi)
G3 = Grid(3, 32, 4.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(4, 16, 1.0)
    with pytest.raises(ValueError):
        Grid(2, 15, 1.0)
    with pytest.raises(ValueError):
        Grid(2, 16, 0.0)


def test_spectral_derivatives_of_a_mode():
    x, y = G2.coords
    f = np.sin(3 * x) * np.cos(2 * y)
    g = G2.grad(f)
    assert np.allclose(g[0], 3 * np.cos(3 * x) * np.cos(2 * y), atol=1e-12)
    assert np.allclose(g[1], -2 * np.sin(3 * x) * np.sin(2 * y), atol=1e-12)
    assert np.allclose(G2.lap(f), -13 * f, atol=1e-11)
    assert np.allclose(G2.div(g), G2.lap(f), atol=1e-11)


def test_field_wrappers():
    x, y = G2.coords
    f = ScalarField(G2, np.cos(x))
    assert np.allclose(spectral_gradient(f).values[0], -np.sin(x), atol=1e-12)
    assert np.allclose(spectral_laplacian(f).values, -np.cos(x), atol=1e-12)
    with pytest.raises(ValueError):
        ScalarField(G2, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        VectorField(G2, np.full((2,) + G2.shape, np.nan))


def test_gaussian_mass_and_semigroup():
    g = Grid(1, 64, 4.0)
    k = gaussian_on_grid(g, 1.0, 0.3)
    assert abs(g.integrate(k) - 1) < 1e-12
    # Chapman-Kolmogorov on the torus
    x = g.axis
    a = gaussian_kernel(1.0, 0.3, x[:, None], 0.7, d=1, L=4.0)
    b = gaussian_kernel(1.0, 0.5, 1.1, x[:, None], d=1, L=4.0)
    lhs = float(np.sum(a * b) * g.h)
    assert abs(lhs - gaussian_kernel(1.0, 0.8, 0.7, 1.1, d=1, L=4.0)) < 1e-12


def test_gaussian_kernel_closed_form():
    v = gaussian_kernel(2.0, 0.5, [1.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    assert v == pytest.approx((4 * math.pi) ** -1.5 * math.exp(-0.25), rel=1e-14)
    with pytest.raises(ValueError):
        gaussian_kernel(1.0, 0.0, 0.0, 0.0)


def test_frac_power_inverse_and_symbol():
    rng = np.random.default_rng(1)
    f = ScalarField(G3, rng.normal(size=G3.shape))
    back = frac_power(2.0, -0.3, frac_power(2.0, 0.3, f))
    assert np.allclose(back.values, f.values, atol=1e-12)
    with pytest.raises(SingularModeError):
        frac_power_symbol(G3, 0.0, -0.5)


def test_sobolev_norm_of_mode():
    x, _ = G2.coords
    f = np.cos(2 * x)
    lam, alpha = 1.5, 0.7
    want = (lam + 4) ** (alpha / 2) * G2.norm(f)
    assert sobolev_norm(G2, f, alpha, lam) == pytest.approx(want, rel=1e-12)


def test_heat_mollify_mode_and_positivity():
    x, y = G2.coords
    f = ScalarField(G2, np.cos(x) * np.cos(y))
    out = heat_mollify(0.2, f)
    assert np.allclose(out.values, math.exp(-0.4) * f.values, atol=1e-13)
    d = np.zeros(G2.shape)
    d[3, 4] = 1.0
    # smallest admissible time 4 h^2: Nyquist ringing sits below the clip tolerance
    out, clipped = heat_mollify(4 * G2.h**2, ScalarField(G2, d), report=True)
    assert np.min(out.values) >= 0
    assert G2.integrate(out.values) == pytest.approx(G2.integrate(d), abs=1e-12)
    one = heat_mollify(0.3, ScalarField(G2, np.ones(G2.shape)))
    assert np.allclose(one.values, 1.0, atol=1e-14)


def test_heat_mollify_semigroup_and_gaussian_variance():
    g = Grid(2, 64, 6.0)
    f = ScalarField(g, gaussian_on_grid(g, 1.0, 0.2, (0.5, -0.3)))
    two = heat_mollify(0.15, heat_mollify(0.1, f))
    one = heat_mollify(0.25, f)
    assert np.allclose(two.values, one.values, atol=1e-14)
    # variance 2 * 0.2 grows to 2 * (0.2 + 0.25)
    assert np.allclose(one.values, gaussian_on_grid(g, 1.0, 0.45, (0.5, -0.3)), atol=1e-12)


@pytest.mark.parametrize("frac", [4.0, 12.0, 1 / 32])
def test_mollified_delta_root_gradient(frac):
    # <|grad sqrt(e^{eps Lap} delta)|^2> = d / (8 eps); upper end kept at L^2/32,
    # where the periodic images still leave the identity intact
    g = Grid(3, 48, 4.0)
    eps = frac * g.h**2 if frac > 1 else frac * g.L**2
    d = np.zeros(g.shape)
    d[g.index_of((0, 0, 0))] = 1 / g.cell
    u = heat_mollify(eps, ScalarField(g, d)).values
    gr = g.grad(np.sqrt(np.maximum(u, 0)))
    val = g.integrate(np.sum(gr**2, axis=0))
    assert val == pytest.approx(g.d / (8 * eps), rel=0.02)


def test_axis_power_average_matches_quadrature():
    h, a = 0.3, -0.6
    for s in (0.0, 0.3, -0.9):
        want = integrate.quad(lambda u: abs(u) ** a, s - h / 2, s + h / 2,
                              points=[0.0] if abs(s) < h else None)[0] / h
        assert axis_power_average(np.array(s), h, a) == pytest.approx(want, rel=1e-10)
    with pytest.raises(ValueError):
        axis_power_average(np.array(0.0), 0.1, -1.0)


def test_radial_sample_center_cell_average():
    # cell average of 1/|x| over the cube [-h/2, h/2]^3, by 48-fold symmetry
    g = Grid(3, 16, 2.0)
    v = integrate.tplquad(lambda z, y, x: 1 / math.sqrt(x * x + y * y + z * z),
                          0, 0.5, 0, lambda x: x, 0, lambda x, y: y)[0] * 48 / g.h
    w = radial_sample(g, lambda r: 1 / r)
    assert w[g.index_of((0, 0, 0))] == pytest.approx(v, rel=2e-3)
    assert np.all(np.isfinite(w))


def test_timegrid():
    tg = TimeGrid.from_dt(0.0, 1.0, 0.3)
    assert tg.steps == 4 and tg.times[-1] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0.3, 3)


def test_diffusion_matrix_window():
    a = DiffusionMatrix(np.array([[2.0, 0.5], [0.5, 1.0]]), 0.5, 3.0)
    assert a.reference == pytest.approx(1.5)
    with pytest.raises(ValueError):
        DiffusionMatrix(np.array([[2.0, 0.0], [0.0, 1.0]]), 1.5, 3.0)
    with pytest.raises(ValueError):
        DiffusionMatrix(np.array([[2.0, 1.0], [0.0, 1.0]]), 0.1, 3.0)


small = arrays(np.float64, (16, 16), elements=st.floats(-10, 10, allow_nan=False))
G16 = Grid(2, 16, 1.0)


@given(small, small)
def test_parseval(f, g):
    assert G16.mode_inner(f, g) == pytest.approx(G16.inner(f, g), abs=1e-9 * (1 + np.abs(f).sum() * np.abs(g).sum()))


@given(small, small, st.floats(-3, 3))
def test_gradient_linear(f, g, c):
    lhs = G16.grad(f + c * g)
    rhs = G16.grad(f) + c * G16.grad(g)
    assert np.allclose(lhs, rhs, atol=1e-8 * (1 + np.abs(f).max() + abs(c) * np.abs(g).max()))


@given(small)
def test_gradient_integrates_to_zero(f):
    for comp in G16.grad(f):
        assert abs(G16.integrate(comp)) < 1e-9 * (1 + np.abs(f).max())
