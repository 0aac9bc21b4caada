"""Gaussian envelopes and the Nash-type diagnostics behind them."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln

from heatlab.field import Grid, frac_power_symbol, gaussian_on_grid
from heatlab.drift.families import spectral_quadratic, odd_ksq
from heatlab.evolution import KernelEstimate, Trajectory

GOLDEN = (math.sqrt(5) - 1) / 2
EPS_LADDER = (1e-2, 1e-4, 1e-6)


# envelope fitting

@dataclass
class GaussianFit:
    c1: float
    c2: float
    c3: float
    c4: float
    ladder: np.ndarray
    radius: np.ndarray
    n_probes: int
    upper_slack: float  # min over probes of c3 k_c4 / K - 1 (>= 0)
    lower_slack: float  # min over probes of K / (c1 k_c2) - 1 (>= 0)
    meta: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        return {"c1": self.c1, "c2": self.c2, "c3": self.c3, "c4": self.c4, "probes": self.n_probes}


def _probes(K: KernelEstimate, floor: float):
    """Per slice: (tau, squared distances, values) above the floor."""
    g = K.grid
    center = np.asarray(K.source[1], float)
    r2 = np.sum(g.displacement(center) ** 2, axis=0)
    peak = float(np.max(K.slices))
    out = []
    for tau, u in zip(K.lags(), K.slices):
        m = u > floor * peak
        order = np.argsort(r2[m])
        out.append((tau, r2[m][order], u[m][order]))
    return out


def _log_k(c, tau, r2, d):
    return -(d / 2) * np.log(4 * np.pi * c * tau) - r2 / (4 * c * tau)


def _ratio_extreme(probes, c, d, factor, upper: bool, cref: float = 1.0) -> float:
    """max (or min) of K / k_c over probes within factor sqrt(max(c, cref) tau)."""
    vals = []
    for tau, r2, u in probes:
        k = np.searchsorted(r2, factor**2 * max(c, cref) * tau, side="right")
        if k == 0:
            continue
        lr = np.log(u[:k]) - _log_k(c, tau, r2[:k], d)
        vals.append(np.max(lr) if upper else np.min(lr))
    if not vals:
        return np.inf if upper else 0.0
    return float(np.exp(max(vals) if upper else min(vals)))


def _golden(fn, lo, hi, iters=60, maximize=False):
    sgn = -1.0 if maximize else 1.0
    a, b = lo, hi
    x1, x2 = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    f1, f2 = sgn * fn(x1), sgn * fn(x2)
    for _ in range(iters):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = sgn * fn(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = sgn * fn(x2)
    return (x1, sgn * f1) if f1 <= f2 else (x2, sgn * f2)


def gaussian_envelope_fit(K: KernelEstimate, factor: float = 3.0, floor: float = 1e-13,
                          candidates=None, tol: float = 0.01) -> GaussianFit:
    """Feasible two-sided envelope c1 k_c2 <= K <= c3 k_c4 on the probe set.

    The probe set for a candidate diffusivity c is every grid point within
    factor sqrt(max(c, c_ref) tau) of the source (minimum image) where K exceeds
    floor * max K. Upper: minimize c3(c4) = max K / k_c4 over the candidates,
    then refine by golden section between the neighbours of the best one
    (ties go to the smaller c4). Lower: maximize c1(c2) = min K / k_c2 the
    same way (ties go to the larger c2).
    """
    if len(K.ladder) < 3:
        raise ValueError("envelope fitting needs at least three ladder times")
    if np.any(K.mass < 0) or np.max(np.abs(K.mass_defect)) > tol:
        raise ValueError(f"kernel mass defect {np.max(np.abs(K.mass_defect)):.3g} exceeds {tol}")
    d = K.grid.d
    cref = K.reference_c
    if candidates is None:
        candidates = cref * np.round(np.arange(0.5, 4.0001, 0.1), 10)
    candidates = np.asarray(candidates, float)
    probes = _probes(K, floor)
    if sum(p[1].size for p in probes) == 0:
        raise ValueError("no probe points above the floor")

    def upper(c):
        return _ratio_extreme(probes, c, d, factor, True, cref)

    def lower(c):
        return _ratio_extreme(probes, c, d, factor, False, cref)

    vals = np.array([upper(c) for c in candidates])
    j = int(np.argmin(vals))  # first minimizer: smaller c4 on ties
    lo, hi = candidates[max(j - 1, 0)], candidates[min(j + 1, len(candidates) - 1)]
    c4, c3 = _golden(upper, lo, hi)
    if vals[j] <= c3:
        c4, c3 = candidates[j], vals[j]
    vals = np.array([lower(c) for c in candidates])
    j = len(candidates) - 1 - int(np.argmax(vals[::-1]))  # last maximizer: larger c2
    lo, hi = candidates[max(j - 1, 0)], candidates[min(j + 1, len(candidates) - 1)]
    c2, c1 = _golden(lower, lo, hi, maximize=True)
    if vals[j] >= c1:
        c2, c1 = candidates[j], vals[j]
    # absorb the last rounding of log/exp so the certificate is exact
    c1, c3 = c1 * (1 - 1e-12), c3 * (1 + 1e-12)
    # feasibility slack on each envelope's own probe set
    us, ls, n = [], [], 0
    for tau, r2, u in probes:
        k4 = np.searchsorted(r2, factor**2 * max(c4, cref) * tau, side="right")
        k2 = np.searchsorted(r2, factor**2 * max(c2, cref) * tau, side="right")
        n += max(k4, k2)
        if k4:
            us.append(np.min(c3 * np.exp(_log_k(c4, tau, r2[:k4], d)) / u[:k4]) - 1)
        if k2:
            ls.append(np.min(u[:k2] / (c1 * np.exp(_log_k(c2, tau, r2[:k2], d)))) - 1)
    radius = np.array([[factor * math.sqrt(max(c2, cref) * t), factor * math.sqrt(max(c4, cref) * t)]
                       for t in K.lags()])
    return GaussianFit(float(c1), float(c2), float(c3), float(c4), K.ladder.copy(), radius, int(n),
                       float(min(us)), float(min(ls)), {"direction": K.direction})


# Nash G function

@dataclass
class GTrace:
    tau: list = field(default_factory=list)
    G: list = field(default_factory=list)
    G_eps: list = field(default_factory=list)
    Q: list = field(default_factory=list)
    M: list = field(default_factory=list)
    shifted: list = field(default_factory=list)
    beta: float = 2.0
    o: tuple = ()
    z: tuple = ()

    def add(self, tau, G, G_eps, Q=float("nan"), M=float("nan"), d=3):
        self.tau.append(float(tau))
        self.G.append(float(G))
        self.G_eps.append(list(G_eps))
        self.Q.append(Q)
        self.M.append(M)
        self.shifted.append(float(G) + (d / 2) * math.log(tau))

    @property
    def spread(self) -> float:
        return float(max(self.shifted) - min(self.shifted)) if self.shifted else 0.0

    @property
    def constant(self) -> float:
        """Observed C with G + (d/2) log tau >= -C on the trace."""
        return float(-min(self.shifted)) if self.shifted else float("nan")


def nash_G(grid: Grid, U: np.ndarray, beta: float, o, tau: float, z=None,
           eps_ladder=EPS_LADDER, c4: float | None = None):
    """G_eps = <Gamma log(eps Gamma + U)> with Gamma = k_beta(tau, o - .).

    U is the kernel slice u(t, z; t_s, .) in its backward variable and
    tau = t - t_s. Returns (G, [G_eps for eps in ladder]) with G the infimum
    over the ladder (and over eps = 0 when U > 0 wherever Gamma lives).
    """
    o = np.asarray(o, float)
    if z is not None and np.linalg.norm(np.asarray(z, float) - o) > math.sqrt(tau) + 1e-12:
        raise ValueError("z must lie in the ball B(o, sqrt(t - t_s))")
    if c4 is not None and beta < 2 * c4 - 1e-12:
        raise ValueError(f"beta = {beta} is below 2 c4 = {2 * c4}")
    G_w = gaussian_on_grid(grid, beta, tau, o)
    # w log w -> 0: weights below 1e-280 contribute nothing representable
    live = G_w > 1e-280
    w, u = G_w[live], np.asarray(U, float)[live]
    vals = []
    for e in eps_ladder:
        vals.append(float(np.sum(w * np.log(e * w + u)) * grid.cell))
    G = min(vals) if vals else float("nan")
    if np.all(u > 0):
        G = min(G, float(np.sum(w * np.log(u)) * grid.cell))
    return float(G), [float(v) for v in vals]


def gaussian_entropy(d: int, c: float, tau: float) -> float:
    """<k log k> for k = k_c(tau)."""
    return -(d / 2) * math.log(4 * math.pi * c * tau) - d / 2


# entropy and moment

def free_entropy_ratio(d: int) -> float:
    """e^{Q/d} / M for the Gaussian kernel (independent of time)."""
    # Q = (d/2) log(4 pi t) + d/2, M = 2 sqrt(t) Gamma((d+1)/2) / Gamma(d/2)
    return math.sqrt(4 * math.pi) * math.exp(0.5) / (2 * math.exp(gammaln((d + 1) / 2) - gammaln(d / 2)))


def calibrated_entropy_constant(d: int, slack: float = 0.05) -> float:
    return free_entropy_ratio(d) * (1 + slack)


@dataclass
class EntropyMoment:
    Q: float
    M: float
    lhs: float
    rhs: float
    passed: bool
    degenerate: bool


def nash_entropy_moment(grid: Grid, U: np.ndarray, z, C: float | None = None,
                        tol: float = 0.01) -> EntropyMoment:
    """Q = -<U log U>, M = <|z - .| U>, check e^{Q/d} <= C M."""
    U = np.asarray(U, float)
    if np.min(U) < -1e-12 * max(np.max(U), 1e-300):
        raise ValueError("entropy needs a non-negative slice")
    U = np.maximum(U, 0.0)
    mass = grid.integrate(U)
    if abs(mass - 1) > tol:
        warnings.warn(f"slice mass {mass:.6g} rescaled to one")
        U = U / mass
    C = calibrated_entropy_constant(grid.d) if C is None else C
    pos = U > 0
    Q = -float(np.sum(U[pos] * np.log(U[pos])) * grid.cell)
    M = grid.integrate(grid.radius(z) * U)
    lhs, rhs = math.exp(Q / grid.d), C * M
    degenerate = M < grid.h
    return EntropyMoment(Q, M, lhs, rhs, lhs <= rhs or degenerate, degenerate)


# Nash inequality

def nash_ratio(grid: Grid, psi: np.ndarray) -> float:
    """||grad psi||^2 ||psi||_1^{4/d} / ||psi||_2^{2 + 4/d}."""
    psi = np.asarray(psi, float)
    if np.min(psi) < -1e-12 * np.max(np.abs(psi)):
        raise ValueError("Nash ratio needs psi >= 0")
    d = grid.d
    g2 = spectral_quadratic(grid, grid.fft(psi), odd_ksq(grid))
    n1 = grid.integrate(np.abs(psi))
    n2 = grid.norm(psi)
    return g2 * n1 ** (4 / d) / n2 ** (2 + 4 / d)


def nash_family(grid: Grid, scales=None) -> list:
    """(name, psi) pairs: Gaussians, raised-cosine bumps, truncated paraboloids."""
    h, L = grid.h, grid.L
    scales = np.geomspace(4 * h, L / 3, 5) if scales is None else scales
    r = grid.radius()
    out = []
    for s in scales:
        out.append((f"gauss:{s:.4g}", np.exp(-(r**2) / (2 * s**2))))
        out.append((f"cosine:{s:.4g}", np.where(r < 2 * s, 0.5 * (1 + np.cos(np.pi * r / (2 * s))), 0.0)))
        out.append((f"parab:{s:.4g}", np.maximum(1 - r**2 / (2 * s) ** 2, 0.0)))
    return out


def nash_constant(grid: Grid, family=None) -> float:
    """Minimum of the Nash ratio over a family (the frozen C_N*)."""
    family = nash_family(grid) if family is None else family
    return min(nash_ratio(grid, psi) for _, psi in family)


def nash_inequality_check(grid: Grid, psi: np.ndarray, C_star: float) -> tuple:
    r = nash_ratio(grid, psi)
    return r, r >= C_star * (1 - 1e-12)


# spectral gap

def spectral_gap_check(grid: Grid, beta_tau: float, f: np.ndarray, center=None, tol: float = 0.01) -> tuple:
    """(<Gamma |grad f|^2>, <Gamma |f - <Gamma f>|^2> / (2 beta tau)), Gamma = k_1(beta tau)."""
    Gw = gaussian_on_grid(grid, 1.0, beta_tau, center)
    m = grid.integrate(Gw)
    if abs(m - 1) > tol:
        raise ValueError(f"Gaussian weight has mass {m:.4g}")
    gf = grid.grad(f)
    lhs = grid.integrate(Gw * np.sum(gf**2, axis=0))
    mean = grid.integrate(Gw * f)
    rhs = grid.integrate(Gw * (f - mean) ** 2) / (2 * beta_tau)
    return lhs, rhs


def gaussian_identities(grid: Grid, beta_tau: float, center=None) -> dict:
    """Relative errors of three identities for Gamma = k_1(beta tau) on the grid.

    grad: || grad sqrt(Gamma) ||_2 = sqrt(d / (8 beta tau))
    lap:  Laplacian Gamma = |grad Gamma|^2 / Gamma - d Gamma / (2 beta tau), pointwise
          on |x - center| <= L/2, relative to max |Laplacian Gamma|
    moment: <|x|^2 Gamma> = 2 d beta tau
    """
    Gw = gaussian_on_grid(grid, 1.0, beta_tau, center)
    d = grid.d
    r2 = np.sum(grid.displacement(center) ** 2, axis=0)
    g2 = spectral_quadratic(grid, grid.fft(np.sqrt(Gw)), odd_ksq(grid))
    lapG = grid.lap(Gw)
    gG = grid.grad(Gw)
    rhs = np.sum(gG**2, axis=0) / Gw - d * Gw / (2 * beta_tau)
    inner = r2 <= (grid.L / 2) ** 2
    return {
        "grad": abs(math.sqrt(g2 / (d / (8 * beta_tau))) - 1),
        "lap": float(np.max(np.abs(lapG - rhs)[inner]) / np.max(np.abs(lapG))),
        "moment": abs(grid.integrate(r2 * Gw) / (2 * d * beta_tau) - 1),
    }


# energy inequalities

@dataclass
class EnergyReport:
    mode: str
    c_max: float
    slack: np.ndarray
    passed: bool
    detail: dict = field(default_factory=dict)


def energy_check(traj: Trajectory, mode: str = "classical", delta: float = 0.0, lam: float = 1.0,
                 identity_a: bool = True, c_target: float | None = None) -> EnergyReport:
    """Energy inequalities on an emitted trajectory (all steps saved).

    classical: ||u(t)||^2 + c int ||grad u||^2 <= ||f||^2, reporting the
    largest feasible c. fractional (a = I): with v = e^{-lam (t-s)} u,
    ||v(t)||_{1/2}^2 + 2 (1 - delta) int ||v||_{3/2}^2 <= ||f||_{1/2}^2 in the
    Bessel norms ||(lam - Laplacian)^{alpha/2} .||.
    """
    g = traj.grid
    times = np.asarray(traj.times)
    states = traj.raw if traj.raw is not None else traj.states
    if mode == "classical":
        n0 = g.norm(states[0]) ** 2
        e = np.array([g.norm(u) ** 2 for u in states])
        dis = np.array([spectral_quadratic(g, g.fft(u), g.ksq) for u in states])
        cum = integrate.cumulative_trapezoid(dis, times, initial=0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            cs = np.where(cum[1:] > 0, (n0 - e[1:]) / cum[1:], np.inf)
        c_max = float(np.min(cs)) if cs.size else float("inf")
        target = 0.0 if c_target is None else c_target
        slack = n0 - e - target * cum
        return EnergyReport(mode, c_max, slack, bool(np.all(slack >= -1e-12 * n0)),
                            {"energy": e, "dissipation": cum})
    if mode == "fractional":
        if not identity_a:
            raise ValueError("the fractional energy inequality is checked for a = I only")
        s_half = frac_power_symbol(g, lam, 0.25)
        s_3half = frac_power_symbol(g, lam, 0.75)
        damp = np.exp(-lam * (times - times[0]))
        half = np.array([spectral_quadratic(g, g.fft(u), s_half**2) for u in states]) * damp**2
        three = np.array([spectral_quadratic(g, g.fft(u), s_3half**2) for u in states]) * damp**2
        cum = integrate.cumulative_trapezoid(three, times, initial=0.0)
        slack = half[0] - half - 2 * (1 - delta) * cum
        with np.errstate(divide="ignore", invalid="ignore"):
            cs = np.where(cum[1:] > 0, (half[0] - half[1:]) / cum[1:], np.inf)
        return EnergyReport(mode, float(np.min(cs)) if cs.size else float("inf"), slack,
                            bool(np.all(slack >= -1e-12 * half[0])), {"half": half, "three_half": cum})
    raise ValueError("energy mode must be 'classical' or 'fractional'")


# g condition

def g_condition_check(g, T: float | None = None, times=None, n_grid: int = 48) -> float:
    """sup over 0 <= s < t <= T of int_s^t g / sqrt(t - s).

    ``g`` is a callable (adaptive quadrature, grid search plus local
    refinement) or an array of samples on ``times`` (trapezoid rule, every
    pair of nodes).
    """
    if callable(g):
        if T is None or not T > 0:
            raise ValueError("a callable g needs a horizon T > 0")

        def val(s, t):
            if t <= s:
                return 0.0
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                v, _ = integrate.quad(g, s, t, limit=200, epsabs=1e-13, epsrel=1e-12)
            return v / math.sqrt(t - s)

        grid = np.linspace(0.0, T, n_grid + 1)
        best, arg = -np.inf, (0.0, T)
        for i, s in enumerate(grid[:-1]):
            for t in grid[i + 1:]:
                v = val(s, t)
                if v > best:
                    best, arg = v, (s, t)

        def neg(p):
            s, t = np.clip(p[0], 0, T), np.clip(p[1], 0, T)
            return -val(min(s, t), max(s, t))

        res = optimize.minimize(neg, np.array(arg), method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 400})
        return float(max(best, -res.fun))
    v = np.asarray(g, float)
    if times is None:
        raise ValueError("sampled g needs its sample times")
    times = np.asarray(times, float)
    if np.min(v) < 0:
        raise ValueError("g must be non-negative")
    G = integrate.cumulative_trapezoid(v, times, initial=0.0)
    dG = G[None, :] - G[:, None]
    dt = times[None, :] - times[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(dt > 0, dG / np.sqrt(np.where(dt > 0, dt, 1.0)), -np.inf)
    return float(np.max(q))
