"""Kato norms of space-time potentials.

The heat potential int k(t - tau, x - y) V(tau, y) dy dtau is evaluated with
the whole-space kernel: the tau integral is folded into a radial table
K(r) = int k(sigma, r) d sigma (geometric panels, 4-point Gauss-Legendre),
and the y integral is a zero-padded FFT convolution, so no torus images
enter.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.interpolate import CubicSpline

from heatlab.field import Grid, singular_sample, _workers
from heatlab.drift.spec import PotentialSpec

_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)


def sigma_nodes(lo: float, hi: float, per_decade: int = 64, graded: bool = True, floor: float = 1e-12):
    """Quadrature nodes/weights on [lo, hi] in sigma.

    With ``graded`` and lo == 0 the panels are geometric from ``floor`` up
    to hi; otherwise geometric between lo and hi.
    """
    if hi <= lo:
        return np.zeros(0), np.zeros(0)
    a = max(lo, floor) if graded else lo
    if a <= 0:
        a = floor
    decades = np.log10(hi / a)
    m = max(1, int(np.ceil(decades * per_decade)))
    edges = np.geomspace(a, hi, m + 1)
    left, right = edges[:-1], edges[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


def kernel_table(d: int, lo: float, hi: float, rmin: float, rmax: float, c: float = 1.0,
                 per_decade: int = 64, nr: int = 600):
    """Spline of log K(r) with K(r) = int_lo^hi k_c(sigma, r) d sigma."""
    floor = min(rmin**2 / (400 * c), 1e-3 * max(hi, 1e-300))
    sig, w = sigma_nodes(lo, hi, per_decade, graded=lo == 0, floor=floor)
    r = np.geomspace(rmin, rmax, nr)
    K = np.zeros(nr)
    for j in range(0, sig.size, 256):
        s = sig[j: j + 256, None]
        K += np.sum(w[j: j + 256, None] * (4 * np.pi * c * s) ** (-d / 2)
                    * np.exp(-(r[None, :] ** 2) / (4 * c * s)), axis=0)
    K = np.maximum(K, 1e-300)
    spline = CubicSpline(np.log(r), np.log(K))

    def evaluate(rr):
        rr = np.asarray(rr, float)
        out = np.exp(spline(np.log(np.clip(rr, rmin, rmax))))
        if d >= 3:
            # Newtonian growth below the table
            small = rr < rmin
            out = np.where(small, out * (rmin / np.maximum(rr, 1e-300)) ** (d - 2), out)
        out = np.where(rr > rmax, 0.0, out)
        return out

    return evaluate


@dataclass
class _Padded:
    grid: Grid

    @property
    def big(self) -> Grid:
        g = self.grid
        return Grid(g.d, 2 * g.n, 2 * g.L)

    def embed(self, v: np.ndarray) -> np.ndarray:
        g = self.grid
        out = np.zeros((2 * g.n,) * g.d)
        out[(slice(0, g.n),) * g.d] = v
        return out

    def kernel_fft(self, prof) -> np.ndarray:
        g = self.grid
        big = self.big
        # kernel indexed by displacement with zero at the origin corner
        z = np.stack(np.meshgrid(*([np.fft.fftfreq(2 * g.n, 1.0 / (2 * g.n)) * g.h] * g.d),
                                 indexing="ij"))
        r = np.sqrt(np.sum(z**2, axis=0))
        K = prof(r)
        # cells next to the singularity are replaced by cell averages
        near = singular_sample(Grid(g.d, 8, 4 * g.h), lambda zz: prof(np.sqrt(np.sum(zz**2, axis=0))),
                               rings=1, sub=16)
        for off in np.array(np.meshgrid(*([[-1, 0, 1]] * g.d), indexing="ij")).reshape(g.d, -1).T:
            K[tuple(off % (2 * g.n))] = near[tuple(off + 4)]
        return sfft.rfftn(K, workers=_workers()), big

    def convolve(self, Kf: np.ndarray, v: np.ndarray) -> np.ndarray:
        g = self.grid
        V = sfft.rfftn(self.embed(v), workers=_workers())
        out = sfft.irfftn(Kf * V, s=(2 * g.n,) * g.d, workers=_workers())
        return out[(slice(0, g.n),) * g.d] * g.cell


@dataclass
class KatoResult:
    value: float
    forward: float
    backward: float
    tail: float
    horizon: float
    argmax: tuple
    warnings: list = field(default_factory=list)

    @property
    def extrapolated(self) -> float:
        """Horizon value plus the frozen-potential tail bound."""
        return self.value + self.tail


def _heat_potential(grid, pad, slices, t_eval, T, direction, c, per_decade):
    """Field F(x) for one evaluation time (forward) or start time (backward)."""
    total = np.zeros(grid.shape)
    rmin = grid.h / 64
    rmax = np.sqrt(grid.d) * 2 * grid.L
    for (a, b, v) in slices:
        if not np.any(v):
            continue
        if direction == "forward":
            lo, hi = max(t_eval - min(b, t_eval), 0.0), t_eval - a
        else:
            lo, hi = max(a - t_eval, 0.0), min(b, T) - t_eval
        if hi <= lo or hi <= 0:
            continue
        prof = kernel_table(grid.d, lo, hi, rmin, rmax, c, per_decade)
        Kf, _ = pad.kernel_fft(prof)
        total += pad.convolve(Kf, v)
    return total


def kato_norm(V: PotentialSpec, T: float, grid: Grid, direction: str = "both",
              c: float = 1.0, per_decade: int = 64, eval_times=None) -> KatoResult:
    """Kato norm over the horizon [0, T].

    forward: sup_{t <= T, x} int_0^t <k(t - tau, x - .) V(tau)> d tau
    backward: sup_{s, x} int_s^T <k(tau - s, x - .) V(tau)> d tau
    """
    if not T > 0:
        raise ValueError("horizon must be positive")
    pad = _Padded(grid)
    slices = []
    for a, b, tm in V.slices(T):
        v = V.sample(grid, tm)
        if np.min(v) < 0:
            raise ValueError("Kato norm needs a non-negative potential")
        slices.append((a, b, v))
    breaks = sorted({a for a, _, _ in slices} | {T})
    out = {"forward": 0.0, "backward": 0.0}
    arg = (T, tuple(np.zeros(grid.d)))
    mids = [0.5 * (a + b) for a, b, _ in slices]
    for direction_ in ("forward", "backward"):
        if direction not in ("both", direction_):
            continue
        if not V.time_dependent and out["forward"] > 0:
            # the kernel is symmetric, so both directions coincide
            out["backward"] = out["forward"]
            continue
        if eval_times is not None:
            times = list(eval_times)
        elif not V.time_dependent:
            times = [T] if direction_ == "forward" else [0.0]
        elif direction_ == "forward":
            times = sorted(t for t in set(breaks) | set(mids) if t > 0)
        else:
            times = sorted(t for t in set(breaks) | set(mids) if t < T)
        for t in times:
            F = _heat_potential(grid, pad, slices, t, T, direction_, c, per_decade)
            j = np.unravel_index(np.argmax(F), F.shape)
            if F[j] > out[direction_]:
                out[direction_] = float(F[j])
                arg = (t, tuple(grid.point_of(j)))
    value = max(out.values())
    last = slices[-1][2] if slices else np.zeros(grid.shape)
    if grid.d >= 3:
        tail = grid.integrate(last) * (4 * np.pi * c) ** (-grid.d / 2) * T ** (1 - grid.d / 2) / (grid.d / 2 - 1)
    else:
        tail = np.inf if np.any(last) else 0.0
    notes = []
    if value > 0 and tail > 0.01 * value:
        msg = f"horizon {T} too short to stabilize; tail bound {tail:.3g}"
        notes.append(msg)
        warnings.warn(msg)
    return KatoResult(value, out["forward"], out["backward"], float(tail), T, arg, notes)
