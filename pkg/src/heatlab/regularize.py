"""Regularization pipelines that keep class constants under control.

Spatial smoothing uses the sampled periodic heat kernel normalized to unit
discrete mass, so it is positivity preserving, mass preserving and never
raises the sup norm. Time smoothing is either a Gaussian with zero
extension to t < 0 or a forward Steklov average.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import ndtr

from heatlab.field import Grid, gaussian_on_grid, radial_sample
from heatlab.drift.spec import DriftSpec, PotentialSpec
from heatlab.drift.families import TestFunctionFamily
from heatlab.drift.estimators import (bmo_norm, sobolev_constant, weak_formbound_estimate)
from heatlab.drift.examples import matrix_divergence

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def steklov_window(eps: float) -> float:
    """Default Steklov window c(eps) = eps^2."""
    return eps**2


@dataclass
class MollifierSchedule:
    eps: float
    delta: float
    delta_eps: float
    c_eps: float
    window: float
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gamma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slack: np.ndarray = field(default_factory=lambda: np.zeros(0))
    converged: bool = True
    sobolev_c: float = float("nan")

    def __post_init__(self):
        if not 0 < self.c_eps <= 1:
            raise ValueError("c_eps must lie in (0, 1]")
        if not self.window > 0:
            raise ValueError("Steklov window must be positive")
        if self.gamma.size and not (np.all(self.gamma > 0) and np.all(self.gamma <= 1)):
            raise ValueError("gamma must lie in (0, 1]")


# spatial and temporal smoothing

def kernel_mollify(grid: Grid, eps: float, f: np.ndarray) -> np.ndarray:
    """Convolution with the sampled heat kernel k(eps, .), unit discrete mass.

    Works on scalar fields and on stacks whose last d axes are spatial.
    """
    f = np.asarray(f, float)
    if eps <= 0:
        return f.copy()
    k = gaussian_on_grid(grid, 1.0, eps)
    k /= np.sum(k)
    # shift the kernel so that its peak sits at index 0
    k = np.roll(k, tuple(-i for i in grid.index_of(np.zeros(grid.d))), axis=tuple(range(grid.d)))
    K = grid.fft(k)
    out = grid.ifft(grid.fft(f) * K)
    if np.min(f) >= 0:
        np.maximum(out, 0.0, out=out)
    return out


def steklov(fn: Callable[[float], np.ndarray], t: float, c: float, panels: int = 1):
    """[h]_c(t) = c^-1 int_t^{t+c} h by Gauss-Legendre."""
    edges = np.linspace(t, t + c, panels + 1)
    acc = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        for x, w in zip(_GL_X, _GL_W):
            acc = acc + 0.5 * w * (b - a) * fn(0.5 * (a + b) + 0.5 * (b - a) * x)
    return acc / c


def steklov_samples(values, dt: float, c: float) -> np.ndarray:
    """Forward moving average over m = round(c/dt) cells, zero past the end.

    values are cell averages of h on consecutive intervals of length dt; the
    discrete map is an l^2 contraction by Jensen's inequality.
    """
    v = np.asarray(values, float)
    m = max(1, int(round(c / dt)))
    pad = np.concatenate([v, np.zeros((m,) + v.shape[1:])])
    cs = np.cumsum(np.concatenate([np.zeros((1,) + v.shape[1:]), pad]), axis=0)
    return (cs[m: m + v.shape[0]] - cs[: v.shape[0]]) / m


def time_gauss_mass(t, eps: float, t_max: float = np.inf):
    """Mass of the N(t, 2 eps) density on [0, t_max]."""
    s = math.sqrt(2 * eps)
    hi = 1.0 if np.isinf(t_max) else ndtr((t_max - np.asarray(t)) / s)
    return hi - ndtr(-np.asarray(t) / s)


# cutoff, smoothing and rescaling pipeline for weakly form-bounded drifts

def indicator_cutoff(b: DriftSpec, eps: float) -> DriftSpec:
    """b restricted to t <= eps^-1/2, |x| <= 1/eps, |b| <= 1/eps."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    tmax, cap = eps**-0.5, 1.0 / eps

    def mask(g, t):
        if t > tmax or t < 0:
            return np.zeros(g.shape, bool)
        return (g.radius() <= cap) & (b.magnitude(g, t) <= cap)

    def rule(g, t):
        return b.sample(g, t) * mask(g, t)

    def mag(g, t):
        return b.magnitude(g, t) * mask(g, t)

    return DriftSpec(f"cut[{eps:g}]{b.name}", rule, T=b.T, magnitude_rule=mag,
                     time_dependent=b.time_dependent, singular=False,
                     params={**b.params, "cutoff_eps": eps}, meta=dict(b.meta))


def _gamma_bisect(grid, field_, target, iters=24, lo=1e-12, hi=1.0):
    """Largest gamma in (lo, hi] with ||e^{gamma Lap} F - F||_d <= target."""
    def dist(gm):
        diff = kernel_mollify(grid, gm, field_) - field_
        return grid.norm(np.sqrt(np.sum(diff**2, axis=0)), grid.d)

    if dist(hi) <= target:
        return hi, dist(hi), True
    a, b = math.log(lo), math.log(hi)
    if dist(lo) > target:
        return lo, dist(lo), False
    for _ in range(iters):
        m = 0.5 * (a + b)
        if dist(math.exp(m)) <= target:
            a = m
        else:
            b = m
    return math.exp(a), dist(math.exp(a)), True


def approx_weak_formbounded(b: DriftSpec, eps: float, lam: float, fam: TestFunctionFamily,
                            grid: Grid, times, delta: float | None = None,
                            sobolev_c: float | None = None, iters: int = 24):
    """b_eps = c_eps e^{eps Lap_t} e^{gamma(t) Lap} 1_eps b on the given times.

    gamma(t) is the largest level for which the L^d distance of the spatial
    smoothing stays below (delta_eps - delta)/c^2, c the Sobolev constant of
    the family. Returns (sampled drift, schedule).
    """
    times = np.asarray(times, float)
    cut = indicator_cutoff(b, eps)
    if delta is None:
        delta = max(weak_formbound_estimate(b, t, lam, fam, grid) for t in times)
    c = sobolev_constant(grid, lam, fam) if sobolev_c is None else sobolev_c
    delta_eps = delta * (1 + eps)
    c_eps = delta / delta_eps if delta > 0 else 1.0
    target = (delta_eps - delta) / c**2 if delta > 0 else 0.0
    tmax = eps**-0.5
    sd = math.sqrt(2 * eps)

    def smoothed(t):
        F = cut.sample(grid, t)
        if not np.any(F):
            return F, 1.0, 0.0, True
        gm, dist, ok = _gamma_bisect(grid, F, target, iters)
        return kernel_mollify(grid, gm, F), gm, dist, ok

    gammas, slack, conv = [], [], True
    out = []
    if not b.time_dependent:
        S, gm, dist, ok = smoothed(0.0)
        for t in times:
            out.append(c_eps * float(time_gauss_mass(t, eps, tmax)) * S)
        gammas, slack, conv = [gm] * times.size, [dist] * times.size, ok
    else:
        # quadrature nodes for the time Gaussian; zero extension below 0
        dtau = sd / 8
        top = min(tmax, times.max() + 8 * sd)
        nodes = np.arange(0.5 * dtau, top, dtau)
        cache = {}
        for tau in nodes:
            cache[tau] = smoothed(tau)
            conv &= cache[tau][3]
        for t in times:
            w = np.exp(-((t - nodes) ** 2) / (4 * eps)) / math.sqrt(4 * math.pi * eps) * dtau
            # normalize against the full-line node sum so weights never exceed mass 1
            full = np.arange(math.floor((t - 10 * sd) / dtau), math.ceil((t + 10 * sd) / dtau) + 1)
            tot = np.sum(np.exp(-((t - (full + 0.5) * dtau) ** 2) / (4 * eps))) / math.sqrt(4 * math.pi * eps) * dtau
            w = w / max(tot, 1.0)
            acc = np.zeros((grid.d,) + grid.shape)
            for wi, tau in zip(w, nodes):
                if wi > 1e-16:
                    acc += wi * cache[tau][0]
            out.append(c_eps * acc)
            j = int(np.argmin(np.abs(nodes - t)))
            gammas.append(cache[nodes[j]][1])
            slack.append(cache[nodes[j]][2])
    sched = MollifierSchedule(eps, float(delta), float(delta_eps), float(c_eps), steklov_window(eps),
                              times, np.array(gammas), np.array(slack), conv, float(c))
    spec = DriftSpec.from_samples(grid, times, np.array(out), name=f"prop43[{eps:g}]{b.name}",
                                  params={**b.params, "eps": eps, "lam": lam})
    return spec, sched


# Section 6 style pipelines

def approx_mf(b: DriftSpec, eps: float, c: float | None = None) -> DriftSpec:
    """[E_eps b]_c: spatial heat smoothing, then forward Steklov average."""
    c = steklov_window(eps) if c is None else c
    cache: dict = {}

    def mollified(g, t):
        key = (g, 0.0 if not b.time_dependent else float(t))
        if key not in cache:
            cache[key] = kernel_mollify(g, eps, b.sample(g, t))
        return cache[key]

    def rule(g, t):
        if not b.time_dependent:
            return mollified(g, t)
        return steklov(lambda s: mollified(g, s), t, c)

    return DriftSpec(f"steklov_mf[{eps:g}]{b.name}", rule, T=b.T, time_dependent=b.time_dependent,
                     params={**b.params, "eps": eps, "window": c}, meta=dict(b.meta))


def mf_pointwise_bound(grid: Grid, eps: float, delta: float, g: float) -> float:
    """sqrt(d/(8 eps)) delta + g, the sup bound for E_eps b with b in MF."""
    return math.sqrt(grid.d / (8 * eps)) * delta + g


def heat_root_member(grid: Grid, eps: float, center):
    """Family member whose square is the heat kernel k(eps, . - center) up to scale."""
    from heatlab.drift.families import Member
    return Member("gauss", tuple(float(x) for x in center), (2 * math.sqrt(eps),))


def bmo_constant(grid: Grid, B: np.ndarray, center=None) -> float:
    """c with bmo(c log|x|) = bmo(B) (max over the upper-triangle entries)."""
    d = grid.d
    ref = bmo_norm(radial_sample(grid, np.log, center), grid)
    top = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            top = max(top, bmo_norm(B[i, j], grid))
    return top / ref if ref > 0 else 0.0


def approx_bmo(B: np.ndarray, eps: float, grid: Grid, c: float | None = None, center=None):
    """B_eps = E_eps (B clipped between V_eps and U_eps), b_eps = div B_eps.

    U_eps = (1/eps - c log|x|) clipped to [0, 1/eps], V_eps = -U_eps. The clip
    is applied to the upper triangle and mirrored, so B_eps stays skew.
    """
    B = np.asarray(B, float)
    d = grid.d
    if not np.allclose(B, -np.swapaxes(B, 0, 1), atol=1e-12):
        raise ValueError("B must be skew-symmetric")
    c = bmo_constant(grid, B, center) if c is None else c
    logr = radial_sample(grid, np.log, center)
    U = np.clip(1.0 / eps - c * logr, 0.0, 1.0 / eps)
    out = np.zeros_like(B)
    for i in range(d):
        for j in range(i + 1, d):
            e = kernel_mollify(grid, eps, np.clip(B[i, j], -U, U))
            out[i, j], out[j, i] = e, -e
    return out, matrix_divergence(grid, out), c


def approx_div_parts(Vp: PotentialSpec, Vm: PotentialSpec, eps: float, c: float | None = None):
    """[E_eps V]_c for both parts; stays non-negative."""
    c = steklov_window(eps) if c is None else c

    def wrap(V):
        cache: dict = {}

        def mollified(g, t):
            key = (g, float(t) if V.time_dependent else 0.0)
            if key not in cache:
                cache[key] = kernel_mollify(g, eps, V.sample(g, t))
            return cache[key]

        def rule(g, t):
            if not V.time_dependent:
                return mollified(g, t)
            return np.maximum(steklov(lambda s: mollified(g, s), t, c), 0.0)

        # the Steklov average shifts every break left by the window
        br = tuple(sorted({max(x - c, 0.0) for x in V.breaks} | set(V.breaks) - {0.0}))
        return PotentialSpec(f"div_parts[{eps:g}]{V.name}", rule, br, params={**V.params, "eps": eps})

    return wrap(Vp), wrap(Vm)


def potential_parts(b: DriftSpec, name: str = "") -> tuple:
    """((div b)_+, (div b)_-) of a drift as potential specs."""
    plus = PotentialSpec(f"{name or b.name}+", lambda g, t: b.div_parts(g, t)[0])
    minus = PotentialSpec(f"{name or b.name}-", lambda g, t: b.div_parts(g, t)[1])
    return plus, minus


def l1_distance(grid: Grid, a, b, times, radius: float | None = None) -> float:
    """Space-time L^1 distance between two drifts (or potentials) over a box."""
    times = np.asarray(times, float)
    mask = np.ones(grid.shape, bool) if radius is None else grid.radius() <= radius
    vals = []
    for t in times:
        x, y = a.sample(grid, t), b.sample(grid, t)
        diff = np.abs(x - y)
        if diff.ndim == grid.d + 1:
            diff = np.sqrt(np.sum(diff**2, axis=0))
        vals.append(grid.integrate(diff * mask))
    vals = np.array(vals)
    return float(np.trapezoid(vals, times)) if times.size > 1 else float(vals[0])


PIPELINES = {
    "prop43": approx_weak_formbounded,
    "steklov_mf": approx_mf,
    "bmo_trunc": approx_bmo,
    "div_parts": approx_div_parts,
}
