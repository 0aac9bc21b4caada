"""Class-membership functionals estimated over finite trial families.

Every estimate is a maximum over explicit trial functions and is therefore a
lower bound on the true constant. The additive constant (g, h) is fixed first
on the widest family members (the anchors); the dilation-invariant constant
(delta, nu) is then extracted from what remains.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from heatlab.field import Grid, frac_power_symbol
from heatlab.drift.families import TestFunctionFamily, member_norms, spectral_quadratic
from heatlab.drift.spec import DriftSpec, PotentialSpec


@dataclass
class ClassEstimate:
    """Collected estimates for one drift; all values are lower bounds."""

    name: str
    times: list = field(default_factory=list)
    delta_m: float | None = None
    delta_mf: float | None = None
    g: list = field(default_factory=list)
    lam: float | None = None
    delta_wfb: float | None = None
    nu_plus: float | None = None
    h_plus: list = field(default_factory=list)
    nu_minus: float | None = None
    h_minus: list = field(default_factory=list)
    kato_plus: float | None = None
    kato_minus: float | None = None
    morrey: dict = field(default_factory=dict)
    bmo: float | None = None
    settings: dict = field(default_factory=dict)
    lower_bound: bool = True


def _vector(b, grid, t):
    return b.sample(grid, t) if isinstance(b, DriftSpec) else np.asarray(b, float)


def _magnitude(b, grid, t):
    if isinstance(b, DriftSpec):
        return b.magnitude(grid, t)
    b = np.asarray(b, float)
    return np.sqrt(np.sum(b**2, axis=0)) if b.ndim == grid.d + 1 else np.abs(b)


def _potential(V, grid, t):
    if isinstance(V, PotentialSpec):
        return V.sample(grid, t)
    return np.asarray(V, float)


def _pairings(grid: Grid, fam: TestFunctionFamily, weight: np.ndarray) -> np.ndarray:
    """Rows (pairing, ||psi||^2, ||grad psi||^2) for every member.

    ``weight`` is scalar (d-shape) or vector ((d, ...)); vector pairings are
    the Euclidean norm of the component integrals.
    """
    rows = []
    for m in fam.all():
        psi2 = m.evaluate(grid) ** 2
        if weight.ndim == grid.d + 1:
            comps = np.array([grid.integrate(wi * psi2) for wi in weight])
            p = float(np.linalg.norm(comps))
        else:
            p = grid.integrate(weight * psi2)
        n2, g2 = member_norms(grid, m)
        rows.append((p, n2, g2))
    return np.array(rows)


def _split(rows: np.ndarray, n_anchor: int, power: float) -> tuple:
    """(dilation constant, additive constant) from pairing rows.

    power = 1 for the multiplicative form (||grad psi|| ||psi||),
    power = 2 for the quadratic form (||grad psi||^2).
    """
    p, n2, g2 = rows.T
    g = float(np.max(p[:n_anchor] / n2[:n_anchor])) if n_anchor else 0.0
    g = max(g, 0.0)
    ok = g2 > 0
    if not np.all(ok):
        warnings.warn(f"{int(np.sum(~ok))} family member(s) with zero gradient skipped")
    denom = np.sqrt(g2[ok] * n2[ok]) if power == 1 else g2[ok]
    excess = (p[ok] - g * n2[ok]) / denom
    # excess below round-off is not evidence of a positive constant
    tol = 1e-12 * np.max(np.abs(p[ok]) / denom) if np.any(ok) else 0.0
    delta = float(np.max(excess)) if np.any(ok) else 0.0
    return (delta if delta > tol else 0.0), g


def multiplicative_bound_estimate(b, t: float, fam: TestFunctionFamily, grid: Grid) -> tuple:
    """(delta, g(t)) for |<b psi, psi>| <= delta ||grad psi|| ||psi|| + g ||psi||^2."""
    rows = _pairings(grid, fam, _vector(b, grid, t))
    return _split(rows, len(fam.anchors), power=1)


def mf_bound_estimate(b, t: float, fam: TestFunctionFamily, grid: Grid) -> tuple:
    """(delta, g(t)) for <|b| psi, psi> <= delta ||grad psi|| ||psi|| + g ||psi||^2."""
    rows = _pairings(grid, fam, _magnitude(b, grid, t))
    return _split(rows, len(fam.anchors), power=1)


def formbound_div_estimate(V, t: float, fam: TestFunctionFamily, grid: Grid) -> tuple:
    """(nu, h(t)) for <V psi, psi> <= nu ||grad psi||^2 + h ||psi||^2."""
    v = _potential(V, grid, t)
    if np.min(v) < 0:
        raise ValueError("form-bound estimator expects a non-negative potential")
    rows = _pairings(grid, fam, v)
    return _split(rows, len(fam.anchors), power=2)


def weak_formbound_estimate(b, t: float, lam: float, fam: TestFunctionFamily, grid: Grid) -> float:
    """max over the family of || |b|^(1/2) psi ||^2 / ||(lam - Laplacian)^(1/4) psi||^2."""
    if not lam > 0:
        raise ValueError("weak form-bound needs lambda > 0")
    mag = _magnitude(b, grid, t)
    sym = frac_power_symbol(grid, lam, 0.5)
    best = 0.0
    for m in fam.all():
        psi = m.evaluate(grid)
        den = spectral_quadratic(grid, grid.fft(psi), sym)
        if not den > 0:
            continue
        best = max(best, grid.integrate(mag * psi**2) / den)
    return best


@dataclass(frozen=True)
class InclusionCheck:
    delta: float
    g: float
    ok: bool
    worst_ratio: float


def wfb_to_mf_check(delta: float, lam: float, b, t: float, fam: TestFunctionFamily,
                    grid: Grid, rtol: float = 1e-9) -> InclusionCheck:
    """Verify <|b| psi, psi> <= delta ||grad psi|| ||psi|| + delta sqrt(lam) ||psi||^2."""
    g = delta * np.sqrt(lam)
    rows = _pairings(grid, fam, _magnitude(b, grid, t))
    p, n2, g2 = rows.T
    bound = delta * np.sqrt(g2 * n2) + g * n2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, p / bound, np.where(p > 0, np.inf, 0.0))
    worst = float(np.max(ratio)) if ratio.size else 0.0
    return InclusionCheck(delta, g, worst <= 1 + rtol, worst)


def sobolev_constant(grid: Grid, lam: float, fam: TestFunctionFamily) -> float:
    """Family estimate of sup ||psi||_{2d/(d-1)} / ||(lam - Laplacian)^(1/4) psi||_2."""
    p = 2 * grid.d / (grid.d - 1) if grid.d > 1 else 4.0
    sym = frac_power_symbol(grid, lam, 0.5)
    best = 0.0
    for m in fam.all():
        psi = m.evaluate(grid)
        den = np.sqrt(spectral_quadratic(grid, grid.fft(psi), sym))
        if den > 0:
            best = max(best, grid.norm(psi, p) / den)
    return best


# Morrey, BMO and the LPS split

def morrey_norm(b, t: float, eps: float, grid: Grid, centers=None, radii=None) -> float:
    """sup over balls of r (mean over B_r of |b|^(1+eps))^(1/(1+eps))."""
    if not eps > 0:
        raise ValueError("Morrey exponent needs eps > 0")
    mag = _magnitude(b, grid, t)
    centers = [np.zeros(grid.d)] if centers is None else [np.asarray(c, float) for c in centers]
    if radii is None:
        radii = np.geomspace(2.5 * grid.h, 0.45 * grid.L, 8)
    best = 0.0
    for c in centers:
        r = grid.radius(c)
        for rad in radii:
            if rad >= grid.L or rad <= 2 * grid.h:
                continue
            m = r < rad
            avg = np.mean(mag[m] ** (1 + eps))
            best = max(best, rad * avg ** (1 / (1 + eps)))
    return best


def dyadic_sides(grid: Grid) -> list:
    """Cube sides (in cells) 4, 8, ... up to L that tile the grid."""
    out, m = [], 4
    while m * grid.h <= grid.L + 1e-12:
        if grid.n % m == 0:
            out.append(m)
        m *= 2
    return out


def bmo_norm(F: np.ndarray, grid: Grid, sides=None) -> float:
    """sup over dyadic cubes of the mean of |F - mean_Q F|."""
    F = np.asarray(F, float)
    best = 0.0
    for m in (dyadic_sides(grid) if sides is None else sides):
        k = grid.n // m
        shape = []
        for _ in range(grid.d):
            shape += [k, m]
        blocks = F.reshape(shape)
        inner = tuple(range(1, 2 * grid.d, 2))
        mean = blocks.mean(axis=inner, keepdims=True)
        osc = np.abs(blocks - mean).mean(axis=inner)
        best = max(best, float(osc.max()))
    return best


@dataclass
class LPSSplit:
    part1: np.ndarray  # (nt, *shape): (d/q)(|b|/N)^(q/d), or |b|/N when q = d
    scale: np.ndarray  # (nt,): multiplies part1 in the domination
    part2: np.ndarray  # (nt,): constant-in-space part
    norm1: float  # sup_t ||part1(t)||_d
    norm2: float  # ||part2||_{L^2(dt)}
    dominated: bool
    times: np.ndarray


def lps_split(b, p: float, q: float, grid: Grid, times) -> LPSSplit:
    """Pointwise split |b| <= scale * part1 + part2 from Young's inequality.

    part1 is bounded in L^infinity(L^d) and part2 is square integrable in
    time whenever b lies in L^p(L^q) with d/q + 2/p <= 1.
    """
    d = grid.d
    if q < d or d / q + 2 / p > 1 + 1e-12:
        raise ValueError("need q >= d and d/q + 2/p <= 1")
    times = np.asarray(times, float)
    P1, S, P2 = [], [], []
    dominated = True
    for t in times:
        mag = _magnitude(b, grid, t)
        N = grid.norm(mag, q)
        if N == 0:
            P1.append(np.zeros(grid.shape)); S.append(0.0); P2.append(0.0)
            continue
        if abs(q - d) < 1e-12:
            part1, scale, part2 = mag / N, N, 0.0
        else:
            rp = q / (q - d)
            part1, scale, part2 = (d / q) * (mag / N) ** (q / d), 1.0, N**rp / rp
        dominated &= bool(np.all(mag <= scale * part1 + part2 + 1e-12 * (1 + mag)))
        P1.append(part1); S.append(scale); P2.append(part2)
    P1, S, P2 = np.array(P1), np.array(S), np.array(P2)
    norm1 = max(grid.norm(x, d) for x in P1)
    norm2 = float(np.sqrt(np.trapezoid(P2**2, times))) if times.size > 1 else float(abs(P2[0]))
    return LPSSplit(P1, S, P2, norm1, norm2, dominated, times)
