import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from heatlab.drift import examples as ex
from heatlab.evolution import (EvolutionProblem, StabilityError, Stepper, duhamel_residual, evolve,
                               evolve_adjoint, heat_kernel_estimate, moser_norm_probe, project)
from heatlab.field import DiffusionMatrix, Grid, TimeGrid, gaussian_on_grid
from heatlab.regularize import approx_mf

G = Grid(2, 32, 4.0)
A = DiffusionMatrix.identity(2)


def _variable_a(g):
    x, y = g.coords
    a = np.zeros((2, 2) + g.shape)
    a[0, 0] = 1.5 + 0.3 * np.cos(math.pi * x / g.L)
    a[1, 1] = 1.5 - 0.3 * np.sin(math.pi * y / g.L)
    a[0, 1] = a[1, 0] = 0.2 * np.cos(math.pi * (x + y) / g.L)
    return DiffusionMatrix(a, 0.9, 2.1)


def _rough_drift(g):
    # a non-constant drift with nonzero divergence
    return approx_mf(ex.hardy(0.4, center=(0.3, -0.2)), 0.05)


@pytest.mark.parametrize("mode", ["none", "plus", "minus", "full"])
@pytest.mark.parametrize("variable", [False, True])
def test_transpose_identity(mode, variable):
    a = _variable_a(G) if variable else A
    st_ = Stepper(G, a, _rough_drift(G), mode)
    rng = np.random.default_rng(3)
    f, g = rng.normal(size=G.shape), rng.normal(size=G.shape)
    lhs = G.inner(st_.forward(f, 0.0, 0.002), g)
    rhs = G.inner(f, st_.backward(g, 0.0, 0.002))
    assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + G.norm(f) * G.norm(g))


def test_transpose_identity_over_a_run():
    b = _rough_drift(G)
    tg = TimeGrid.from_dt(0.0, 0.1, 0.002)
    rng = np.random.default_rng(4)
    f, g = rng.normal(size=G.shape), rng.normal(size=G.shape)
    fw = evolve(EvolutionProblem(G, A, b, f, tg, "plus", project=False), save_times=[0.1]).states[-1]
    bw = evolve_adjoint(EvolutionProblem(G, A, b, g, tg, "plus", project=False), save_times=[0.0]).states[-1]
    assert G.inner(fw, g) == pytest.approx(G.inner(f, bw), rel=1e-11)


def test_constants_are_preserved_and_adjoint_conserves_mass():
    b = _rough_drift(G)
    tg = TimeGrid.from_dt(0.0, 0.2, 0.004)
    one = evolve(EvolutionProblem(G, _variable_a(G), b, np.ones(G.shape), tg, project=False))
    assert np.max(np.abs(one.states[-1] - 1)) < 1e-12
    rng = np.random.default_rng(5)
    w0 = rng.uniform(0, 1, G.shape)
    adj = evolve_adjoint(EvolutionProblem(G, A, b, w0, tg, project=False))
    assert G.integrate(adj.states[-1]) == pytest.approx(G.integrate(w0), rel=1e-12)


def test_free_kernel_is_the_truncated_mode_sum():
    # unprojected grid delta under exact diffusion: product of 1d sums over the grid modes
    g = Grid(3, 32, 4.0)
    a = DiffusionMatrix.identity(3, 0.7)
    ladder = [0.1, 0.2, 0.4]
    tg = TimeGrid.from_dt(0.0, 0.4, 0.01)
    raw = evolve(EvolutionProblem(g, a, None, g.delta((0, 0, 0)), tg, project=False), save_times=ladder)
    est = heat_kernel_estimate(g, a, None, 0.0, (0, 0, 0), ladder, dt=0.01)
    x = g.axis
    k = math.pi / g.L * np.arange(-g.n // 2, g.n // 2)
    for t, u, v in zip(ladder, raw.states, est.slices):
        one = np.sum(np.exp(-0.7 * k**2 * t)[:, None] * np.cos(k[:, None] * x[None, :]), axis=0) / (2 * g.L)
        want = one[:, None, None] * one[None, :, None] * one[None, None, :]
        assert np.max(np.abs(u - want)) < 1e-12 * np.max(want)
        # projected slices match the periodic Gaussian up to the spectral tail
        tail = math.exp(-0.7 * (math.pi / g.h) ** 2 * t)
        assert np.max(np.abs(v - gaussian_on_grid(g, 0.7, t))) < 2 * tail * np.max(want) + 1e-14
    assert np.allclose(est.mass, 1.0, atol=1e-12)


def test_constant_drift_transports_the_gaussian():
    g = Grid(3, 32, 4.0)
    v = np.array([0.5, -0.25, 0.0])
    est = heat_kernel_estimate(g, DiffusionMatrix.identity(3), ex.constant(v), 0.0, (0, 0, 0),
                               [0.2, 0.4], dt=0.01)
    for t, u in zip(est.ladder, est.slices):
        want = gaussian_on_grid(g, 1.0, t, v * t)
        tail = math.exp(-(math.pi / g.h) ** 2 * t)
        assert np.max(np.abs(u - want)) < 2 * tail * np.max(want) + 1e-12


def test_adjoint_kernel_mass_and_symmetry_without_drift():
    g = Grid(3, 24, 4.0)
    lad = [0.1, 0.2]
    fw = heat_kernel_estimate(g, DiffusionMatrix.identity(3), None, 0.0, (0, 0, 0), lad)
    bw = heat_kernel_estimate(g, DiffusionMatrix.identity(3), None, 0.0, (0, 0, 0), lad, direction="adjoint")
    assert np.allclose(fw.slices, bw.slices, atol=1e-12)
    with pytest.raises(ValueError):
        heat_kernel_estimate(g, DiffusionMatrix.identity(3), None, 0.0, (0, 0, 0), lad, direction="sideways")


@given(st.integers(0, 2**31 - 1))
def test_positivity_and_max_principle(seed):
    rng = np.random.default_rng(seed)
    f = rng.uniform(0, 1, G.shape) ** 4
    tg = TimeGrid.from_dt(0.0, 0.05, 0.005)
    tr = evolve(EvolutionProblem(G, A, _rough_drift(G), f, tg))
    for u in tr.states:
        assert np.min(u) >= np.min(f) - 1e-14
        assert np.max(u) <= np.max(f) + 1e-14


def test_energy_identity_without_drift():
    g = Grid(3, 32, 4.0)
    f = gaussian_on_grid(g, 1.0, 0.05, (0.3, 0.0, -0.2)) + 0.5 * gaussian_on_grid(g, 1.0, 0.1, (-1.0, 0.5, 0.0))
    tg = TimeGrid.from_dt(0.0, 0.2, 0.002)
    tr = evolve(EvolutionProblem(g, DiffusionMatrix.identity(3), None, f, tg, project=False))
    e = np.array([g.norm(u) ** 2 for u in tr.states])
    dis = np.array([g.norm(np.sqrt(np.sum(g.grad(u) ** 2, axis=0))) ** 2 for u in tr.states])
    lhs = e[0] - e[-1]
    rhs = 2 * np.trapezoid(dis, tr.times)
    assert lhs == pytest.approx(rhs, rel=5e-3)


def test_projection():
    v = np.array([-0.1, 0.5, 1.2, 0.4])
    w, change = project(v, 0.0, 1.0)
    assert np.min(w) >= 0 and np.max(w) <= 1
    assert np.sum(w) == pytest.approx(np.sum(v))
    c = np.full(5, 0.3)
    assert np.array_equal(project(c, 0.0, 1.0)[0], c)


def test_stability_and_nonfinite_guards():
    b = ex.hardy(0.5)
    tg = TimeGrid.from_dt(0.0, 0.1, 0.05)
    with pytest.raises(StabilityError, match="CFL"):
        evolve(EvolutionProblem(G, A, b, np.ones(G.shape), tg))
    f = np.ones(G.shape)
    f[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        evolve(EvolutionProblem(G, A, None, f, tg))
    with pytest.raises(ValueError):
        EvolutionProblem(G, A, None, np.ones((3, 3)), tg)
    with pytest.raises(ValueError):
        EvolutionProblem(G, A, None, f, tg, mode="half")


def test_ladder_validation():
    g = Grid(3, 16, 4.0)
    a = DiffusionMatrix.identity(3)
    with pytest.raises(ValueError, match="two"):
        heat_kernel_estimate(g, a, None, 0.0, (0, 0, 0), [0.1])
    with pytest.raises(ValueError, match="increase"):
        heat_kernel_estimate(g, a, None, 0.0, (0, 0, 0), [0.2, 0.1])
    with pytest.raises(ValueError, match="4 dt"):
        heat_kernel_estimate(g, a, None, 0.0, (0, 0, 0), [0.02, 0.1], dt=0.01)
    with pytest.raises(ValueError, match="step grid"):
        evolve(EvolutionProblem(g, a, None, np.ones(g.shape), TimeGrid.from_dt(0, 0.1, 0.01)), save_times=[0.015])


def test_duhamel_exact_and_trapezoid():
    g = Grid(3, 16, 4.0)
    a = DiffusionMatrix.identity(3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = ex.mprime_field(ex.ball_indicator(1.0))
    Vm = ex.ball_indicator(1.0).scaled(0.2)
    exact = duhamel_residual(g, a, b, Vm, 0.0, (0, 0, 0), [0.25, 0.5], dt=0.025, method="exact")
    assert exact.max_residual < 1e-10
    trap = duhamel_residual(g, a, b, Vm, 0.0, (0, 0, 0), [0.25, 0.5], dt=0.025)
    assert trap.max_residual < 0.02
    with pytest.raises(ValueError):
        duhamel_residual(g, a, ex.lps_demo(), Vm, 0.0, (0, 0, 0), [0.25, 0.5])


def test_moser_probe_twist_limit():
    g = Grid(2, 32, 4.0)
    with pytest.raises(ValueError, match="2/L"):
        moser_norm_probe(g, DiffusionMatrix.identity(2), None, [(1.0, 0.0)], [0.1, 0.2])


def test_moser_probe_free_rate():
    # the input k(tau, .) attains the sharp 2 -> inf norm (8 pi tau)^(-d/4) of the
    # free flow; centred inputs see only part of the twisted growth exp(|alpha|^2 tau)
    g = Grid(2, 128, 16.0)
    rep = moser_norm_probe(g, DiffusionMatrix.identity(2), None,
                           [(0.0, 0.0), (0.0625, 0.0), (0.125, 0.0)], [0.1, 0.2, 0.4])
    assert rep.c == pytest.approx((8 * math.pi) ** -0.5, rel=0.01)
    assert 0 < rep.c4 <= 1.0
    assert rep.alpha_exponent == pytest.approx(2.0, rel=0.05)
    assert rep.truncation < 0.01
