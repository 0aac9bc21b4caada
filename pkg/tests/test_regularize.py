import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from heatlab.drift import examples as ex
from heatlab.drift.estimators import bmo_norm, formbound_div_estimate, mf_bound_estimate, weak_formbound_estimate
from heatlab.drift.families import default_family
from heatlab.drift.kato import kato_norm
from heatlab.field import Grid
from heatlab.regularize import (MollifierSchedule, approx_bmo, approx_div_parts, approx_mf,
                                approx_weak_formbounded, bmo_constant, indicator_cutoff, kernel_mollify,
                                l1_distance, mf_pointwise_bound, potential_parts, steklov,
                                steklov_samples, time_gauss_mass)

G = Grid(3, 32, 8.0)
FAM = default_family(G)
G2 = Grid(2, 16, 2.0)


@given(arrays(np.float64, (16, 16), elements=st.floats(0, 5)), st.floats(1e-3, 1.0))
def test_kernel_mollify_positive_mass_sup(f, eps):
    out = kernel_mollify(G2, eps, f)
    assert np.min(out) >= 0
    assert np.sum(out) == pytest.approx(np.sum(f), abs=1e-9 * (1 + np.sum(f)))
    assert np.max(out) <= np.max(f) + 1e-12


def test_kernel_mollify_constants_and_stacks():
    assert np.allclose(kernel_mollify(G2, 0.3, np.full(G2.shape, 2.0)), 2.0)
    f = np.random.default_rng(0).normal(size=G2.shape)
    stack = kernel_mollify(G2, 0.1, np.stack([f, 2 * f]))
    assert np.allclose(stack[1], 2 * stack[0])
    assert np.array_equal(kernel_mollify(G2, 0.0, f), f)


def test_steklov_exact_on_polynomials():
    # 4 point Gauss-Legendre is exact to degree 7
    assert steklov(lambda s: 3.0, 0.4, 0.2) == pytest.approx(3.0)
    assert steklov(lambda s: s, 0.4, 0.2) == pytest.approx(0.5)
    assert steklov(lambda s: s**3, 1.0, 1.0) == pytest.approx((16 - 1) / 4)


@given(arrays(np.float64, 20, elements=st.floats(-5, 5)), st.integers(1, 6))
def test_steklov_samples_contract(v, m):
    out = steklov_samples(v, 0.1, 0.1 * m)
    assert np.sum(out**2) <= np.sum(v**2) + 1e-12


def test_time_gauss_mass():
    assert time_gauss_mass(0.0, 0.1) == pytest.approx(0.5)
    assert time_gauss_mass(10.0, 0.01) == pytest.approx(1.0)
    assert time_gauss_mass(1.0, 0.01, t_max=1.0) == pytest.approx(0.5)


def test_schedule_validation():
    with pytest.raises(ValueError):
        MollifierSchedule(0.1, 0.5, 0.55, 1.2, 0.01)
    with pytest.raises(ValueError):
        MollifierSchedule(0.1, 0.5, 0.55, 0.9, 0.0)
    with pytest.raises(ValueError):
        MollifierSchedule(0.1, 0.5, 0.55, 0.9, 0.01, gamma=np.array([0.0]))


def test_indicator_cutoff():
    b = ex.hardy(0.3)
    cut = indicator_cutoff(b, 0.5)
    assert np.max(cut.magnitude(G, 0.0)) <= 2.0
    assert not np.any(cut.sample(G, 10.0))
    assert not cut.singular
    with pytest.raises(ValueError):
        indicator_cutoff(b, 0.0)


def test_steklov_mf_reduces_constants_and_obeys_pointwise_bound():
    b = ex.hardy(0.3)
    d0, g0 = mf_bound_estimate(b, 0.0, FAM, G)
    prev = np.inf
    for eps in (0.05, 0.1, 0.2):
        be = approx_mf(b, eps)
        d1, g1 = mf_bound_estimate(be, 0.0, FAM, G)
        assert d1 <= d0 * 1.03 and g1 <= g0 * 1.03 + 1e-12
        sup = np.max(be.magnitude(G))
        assert sup <= mf_pointwise_bound(G, eps, d0, g0)
        assert sup < prev
        prev = sup


def test_steklov_mf_time_dependent():
    b = ex.lps_demo()
    be = approx_mf(b, 0.1)
    # space-time average of t^(-1/4) over [t, t + 0.01]
    t, c = 0.5, 0.01
    want = ((t + c) ** 0.75 - t ** 0.75) / (0.75 * c)
    ref = kernel_mollify(G, 0.1, ex.Bump(1.0).value(G))
    assert np.allclose(be.sample(G, t)[0], want * ref, atol=1e-10)


def test_prop43_pipeline():
    b = ex.hardy(0.3)
    times = [0.25, 0.5]
    delta = weak_formbound_estimate(b, 0.0, 1.0, FAM, G)
    spec, sched = approx_weak_formbounded(b, 0.05, 1.0, FAM, G, times, iters=16)
    assert sched.converged
    assert sched.c_eps == pytest.approx(1 / 1.05)
    assert np.all((sched.gamma > 0) & (sched.gamma <= 1))
    for t in times:
        post = weak_formbound_estimate(spec, t, 1.0, FAM, G)
        assert post <= sched.delta_eps
        assert post <= delta * 1.03
    dists = []
    for eps in (0.2, 0.05):
        s, _ = approx_weak_formbounded(b, eps, 1.0, FAM, G, times, iters=16)
        dists.append(l1_distance(G, s, b, times, radius=2.0))
    assert dists[1] < dists[0]


def test_bmo_truncation():
    g = Grid(3, 32, 4.0)
    c = 0.3
    B = ex.log_matrix(g, c)
    assert bmo_constant(g, B) == pytest.approx(c, rel=0.05)
    Be, be, c_hat = approx_bmo(B, 0.1, g)
    assert np.allclose(Be, -np.swapaxes(Be, 0, 1))
    assert np.max(np.abs(g.div(be))) < 1e-10 * (1 + np.max(np.abs(be)))
    assert np.all(np.isfinite(be))
    assert bmo_norm(Be[0, 1], g) <= bmo_norm(B[0, 1], g) * 1.03
    with pytest.raises(ValueError):
        approx_bmo(np.ones((3, 3) + g.shape), 0.1, g)


def test_div_parts_nonnegative_and_controlled():
    g = Grid(3, 32, 4.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = ex.mprime_field(ex.ball_indicator(1.0))
        Vp, Vm = potential_parts(b)
        Ep, Em = approx_div_parts(Vp, Vm, 0.05)
        for V, E in ((Vp, Ep), (Vm, Em)):
            assert np.min(E.sample(g)) >= 0
            assert kato_norm(E, 1.0, g).value <= kato_norm(V, 1.0, g).value * 1.03
            assert formbound_div_estimate(E, 0.0, default_family(g), g)[0] <= \
                formbound_div_estimate(V, 0.0, default_family(g), g)[0] * 1.03 + 1e-12
