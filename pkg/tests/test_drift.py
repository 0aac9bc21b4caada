import math
import tempfile
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from heatlab.drift import examples as ex
from heatlab.drift.estimators import (bmo_norm, formbound_div_estimate, lps_split, mf_bound_estimate,
                                      morrey_norm, multiplicative_bound_estimate, sobolev_constant,
                                      weak_formbound_estimate, wfb_to_mf_check)
from heatlab.drift.families import Member, default_family
from heatlab.drift.families import TestFunctionFamily as Family
from heatlab.drift.kato import kato_norm, kernel_table
from heatlab.drift.spec import DriftSpec, PotentialSpec, read_binary, write_binary
from heatlab.field import Grid, radial_sample

G = Grid(3, 32, 8.0)
FAM = default_family(G)


def test_zero_drift_estimates():
    b = ex.constant([0.0, 0.0, 0.0])
    assert mf_bound_estimate(b, 0.0, FAM, G) == (0.0, 0.0)
    assert multiplicative_bound_estimate(b, 0.0, FAM, G) == (0.0, 0.0)
    assert weak_formbound_estimate(b, 0.0, 1.0, FAM, G) == 0.0


def test_constant_magnitude_gives_pure_additive_constant():
    b = ex.constant([0.3, 0.4, 0.0])
    delta, g = mf_bound_estimate(b, 0.0, FAM, G)
    assert delta == 0.0
    assert g == pytest.approx(0.5, rel=1e-12)
    chk = wfb_to_mf_check(0.5, 1.0, b, 0.0, FAM, G)
    assert chk.ok and chk.g == pytest.approx(0.5)


def test_potential_constants():
    zero = PotentialSpec("zero", lambda g, t: np.zeros(g.shape))
    assert formbound_div_estimate(zero, 0.0, FAM, G) == (0.0, 0.0)
    c = PotentialSpec("c", lambda g, t: np.full(g.shape, 0.7))
    nu, h = formbound_div_estimate(c, 0.0, FAM, G)
    assert nu == 0.0 and h == pytest.approx(0.7, rel=1e-12)
    with pytest.raises(ValueError):
        formbound_div_estimate(PotentialSpec("neg", lambda g, t: -np.ones(g.shape)), 0.0, FAM, G)


def test_hardy_inclusion_wfb_to_mf():
    b = ex.hardy(0.3)
    delta = weak_formbound_estimate(b, 0.0, 1.0, FAM, G)
    assert 0 < delta < 1
    assert wfb_to_mf_check(delta, 1.0, b, 0.0, FAM, G).ok


def test_family_enrichment_is_monotone():
    V = ex.inverse_square(0.3)
    small = Family(FAM.anchors, FAM.members[:10])
    assert formbound_div_estimate(V, 0.0, FAM, G)[0] >= formbound_div_estimate(V, 0.0, small, G)[0]
    b = ex.hardy(0.3)
    assert mf_bound_estimate(b, 0.0, FAM, G)[0] >= mf_bound_estimate(b, 0.0, small, G)[0]


def test_sobolev_constant_positive_and_finite():
    c = sobolev_constant(G, 1.0, FAM)
    assert 0 < c < np.inf


# Kato norms

def test_kato_zero_and_negative():
    zero = PotentialSpec("zero", lambda g, t: np.zeros(g.shape))
    assert kato_norm(zero, 1.0, G).value == 0.0
    with pytest.raises(ValueError):
        kato_norm(PotentialSpec("neg", lambda g, t: -np.ones(g.shape)), 1.0, G)
    with pytest.raises(ValueError):
        kato_norm(zero, 0.0, G)


def test_kernel_table_closed_form():
    # int_0^inf k(s, r) ds = 1 / (4 pi r) in d = 3
    K = kernel_table(3, 0.0, 1e6, 1e-3, 20.0)
    r = np.array([0.05, 0.5, 3.0])
    assert np.allclose(K(r), 1 / (4 * np.pi * r), rtol=2e-3)


def test_kato_time_window_oracle():
    # V = 1_[0,1](t) 1_B(x); backward sup at s = 0, x = 0 reduces to
    # int_0^1 P(|N(0, 2s I)| < 1) ds = int_0^1 chi2_3.cdf(1 / (2 s)) ds
    g = Grid(3, 48, 6.0)
    V = ex.time_window(ex.ball_indicator(1.0), 0.0, 1.0)
    want = integrate.quad(lambda s: stats.chi2.cdf(1 / (2 * s), 3), 0, 1, limit=200)[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = kato_norm(V, 4.0, g)
    assert res.value < 0.5
    assert res.value == pytest.approx(want, rel=0.03)


def test_kato_stationary_directions_agree():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = kato_norm(ex.ball_indicator(1.0), 2.0, G)
    assert res.forward == res.backward > 0
    assert res.tail > 0 and res.warnings


# Morrey, BMO, LPS

def test_morrey_constant_and_zero():
    b = ex.constant([2.0, 0.0, 0.0])
    radii = [1.0, 2.0, 3.0]
    assert morrey_norm(b, 0.0, 0.1, G, radii=radii) == pytest.approx(3.0 * 2.0)
    assert morrey_norm(ex.constant([0.0, 0.0, 0.0]), 0.0, 0.1, G, radii=radii) == 0.0


def test_morrey_inverse_radius_oracle():
    # |b| = 1/|x|, eps = 0.1: r (mean_B_r |b|^1.1)^(1/1.1) = (3 / 1.9)^(1/1.1), scale free
    g = Grid(3, 64, 8.0)
    mag = radial_sample(g, lambda r: 1 / r)
    b = DriftSpec("inv", lambda gg, t: np.stack([mag, 0 * mag, 0 * mag]))
    want = (3 / 1.9) ** (1 / 1.1)
    for rad in (1.0, 2.0):
        assert morrey_norm(b, 0.0, 0.1, g, radii=[rad]) == pytest.approx(want, rel=0.05)


def test_bmo_invariances():
    g = Grid(3, 32, 4.0)
    F = radial_sample(g, np.log)
    v = bmo_norm(F, g)
    assert bmo_norm(np.full(g.shape, 3.0), g) == 0.0
    assert bmo_norm(F + 5.0, g) == pytest.approx(v, rel=1e-12)
    assert bmo_norm(2.5 * F, g) == pytest.approx(2.5 * v, rel=1e-12)


def test_bmo_log_grid_stable():
    vals = [bmo_norm(radial_sample(Grid(3, n, 4.0), np.log), Grid(3, n, 4.0)) for n in (32, 64)]
    assert vals[1] == pytest.approx(vals[0], rel=0.05)


def test_lps_split():
    g = Grid(3, 16, 4.0)
    zero = lps_split(ex.constant([0.0, 0.0, 0.0]), 4, 6, g, [0.5, 1.0])
    assert zero.norm1 == 0.0 and zero.norm2 == 0.0
    b = ex.lps_demo()
    times = np.linspace(0.1, 1.0, 10)
    out = lps_split(b, 4, 6, g, times)
    assert out.dominated
    # part2 = N^r / r with N = ||b(t)||_q = t^(-1/4) ||phi||_6, r = q/(q - d) = 2
    phi6 = g.norm(ex.Bump(1.0).value(g), 6)
    want = np.sqrt(np.trapezoid((times ** -0.25 * phi6) ** 4 / 4, times))
    assert out.norm2 == pytest.approx(want, rel=1e-10)
    with pytest.raises(ValueError):
        lps_split(b, 4, 2, g, times)


# examples

def test_mprime_divergence_and_newton_profile():
    g = Grid(3, 64, 8.0)
    # smooth W: no Nyquist content, so the spectral identity is exact
    smooth = PotentialSpec("gauss", lambda gg, t: np.exp(-np.sum(np.asarray(gg.coords) ** 2, axis=0)))
    w = smooth.sample(g)
    dv = g.div(ex.mprime_field(smooth).sample(g))
    target = -(w - w.mean())
    assert g.norm(dv - target) / g.norm(target) < 1e-10
    # ball: Newton profile of the sampled mass Q, minus the field m x / 3 of the
    # neutralizing background (image terms vanish to this order by cubic symmetry)
    g = Grid(3, 96, 8.0)
    W = ex.ball_indicator(1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mag = ex.mprime_field(W).magnitude(g)
    Q = g.integrate(W.sample(g))
    m = Q / (2 * g.L) ** 3
    for rr in (0.5, 2.0, 3.0):
        newton = Q / (4 * np.pi) * (rr if rr < 1 else rr**-2)
        assert mag[g.index_of((rr, 0, 0))] == pytest.approx(newton - m * rr / 3, rel=0.02)


def test_kato_plane_bounded_case_and_l2_growth():
    phi = ex.Bump(1.0)
    one = ex.example_kato_not_L2(phi, phi, 1.0)
    g = Grid(3, 32, 2.0)
    # eps = 1: both components are bounded by the bumps
    assert np.max(one.magnitude(g)) <= math.sqrt(2) + 1e-12
    assert not one.singular
    b = ex.example_kato_not_L2(phi, phi, 0.5)
    mass = []
    for n in (16, 32, 64):
        gg = Grid(3, n, 2.0)
        mass.append(gg.integrate(b.sample(gg)[0] ** 2))
    # log divergence: equal increments per halving of h
    inc = np.diff(mass)
    assert inc[0] > 0 and inc[1] > 0
    assert inc[1] == pytest.approx(inc[0], rel=0.15)


def test_parse_drift():
    assert ex.parse_drift("hardy kappa=0.2").params["kappa"] == 0.2
    assert np.allclose(ex.parse_drift("constant v=1,2,3").sample(G)[:, 0, 0, 0], [1, 2, 3])
    with pytest.raises(ValueError, match="unknown drift"):
        ex.parse_drift("nonsense")
    with pytest.raises(ValueError):
        ex.parse_drift("hardy kappa")


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4), st.integers(0, 2**31 - 1))
def test_binary_roundtrip(shape, seed):
    arr = np.random.default_rng(seed).normal(size=shape)
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "a.bin"
        write_binary(p, arr, {"times": [0.0]})
        back, header = read_binary(p)
    assert np.array_equal(arr, back)
    assert header["dims"] == list(arr.shape) and header["order"] == "row-major"


@given(st.floats(0.05, 0.6))
def test_multiplicative_le_mf(kappa):
    # |<b psi, psi>| <= <|b| psi, psi> member by member
    b = ex.hardy(kappa)
    d1, g1 = multiplicative_bound_estimate(b, 0.0, FAM, G)
    d2, g2 = mf_bound_estimate(b, 0.0, FAM, G)
    assert g1 <= g2 + 1e-12


@given(st.floats(0.05, 0.6), st.floats(0.1, 3.0))
def test_estimates_scale_linearly(kappa, s):
    b = ex.hardy(kappa)
    d1, g1 = mf_bound_estimate(b, 0.0, FAM, G)
    d2, g2 = mf_bound_estimate(b.scaled(s), 0.0, FAM, G)
    assert d2 == pytest.approx(s * d1, rel=1e-9, abs=1e-14)
    assert g2 == pytest.approx(s * g1, rel=1e-9, abs=1e-14)


def test_member_validation():
    with pytest.raises(ValueError):
        Member("triangle", (0, 0, 0), (1.0,)).evaluate(G)
