"""Time stepping for (d/dt - div a grad + b.grad + q) u = 0 on the torus.

One step of the linear scheme, in order:

    advection   explicit, upwind stencil blended with the spectral gradient
    potential   exact pointwise factor exp(-dt q)
    variable a  explicit correction div((a - abar) grad u)
    diffusion   exact mode-space factor exp(-dt k.abar.k)

abar is a itself when a is constant, otherwise xi I, which keeps the
explicit correction dissipative. A spatially constant drift is folded into
the mode-space factor as an exact phase. The adjoint step is the exact
transpose of this linear map taken in reverse order.

Emitted states pass through a bound-preserving projection (clip to the data
range, then put the clipped mass back in proportion to the remaining
headroom). The propagated state is never projected, so the scheme stays
linear and its transpose stays exact.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from heatlab.field import DiffusionMatrix, Grid, ScalarField, TimeGrid, gaussian_on_grid
from heatlab.drift.spec import DriftSpec, PotentialSpec

MODES = ("none", "plus", "minus", "full")
CFL_LIMIT = 0.5


class StabilityError(ValueError):
    """The explicit part of the scheme would violate its step restriction."""


@dataclass
class EvolutionProblem:
    """Data of one run.

    mode selects the potential attached to the drift:
    ``none`` q = 0, ``plus`` q = (div b)_+, ``minus`` q = -(div b)_-,
    ``full`` the conservative form div(b u). ``extra`` is added to q.
    """

    grid: Grid
    a: DiffusionMatrix
    b: DriftSpec | None
    f: np.ndarray
    time: TimeGrid
    mode: str = "none"
    extra: PotentialSpec | None = None
    blend: float = 1.0
    project: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"potential mode must be one of {MODES}")
        if isinstance(self.f, ScalarField):
            self.f = self.f.values
        self.f = np.asarray(self.f, float)
        if self.f.shape != self.grid.shape:
            raise ValueError("initial data does not match the grid")
        if self.a.d != self.grid.d:
            raise ValueError("diffusion matrix dimension does not match the grid")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("blend must lie in [0, 1]")

    def cfl(self) -> float:
        """dt sup|b| / h over the sampled step times."""
        if self.b is None:
            return 0.0
        ts = self.time.times[:-1]
        if not self.b.time_dependent:
            ts = ts[:1]
        elif ts.size > 16:
            ts = ts[np.linspace(0, ts.size - 1, 16).astype(int)]
        sup = max(float(np.max(self.b.magnitude(self.grid, t))) for t in ts)
        return self.time.dt * sup / self.grid.h

    def diagnostics(self) -> list:
        out = []
        c = self.cfl()
        if c > CFL_LIMIT:
            out.append(f"CFL number {c:.3g} exceeds {CFL_LIMIT}; reduce dt below "
                       f"{CFL_LIMIT * self.time.dt / c:.3g}")
        return out


def _shift(u, s, ax):
    return np.roll(u, s, axis=ax)


class Stepper:
    """Linear one-step map S(t, dt) and its transpose."""

    def __init__(self, grid: Grid, a: DiffusionMatrix, b: DriftSpec | None, mode: str = "none",
                 extra: PotentialSpec | None = None, blend: float = 1.0):
        self.grid, self.a, self.b, self.mode, self.extra, self.blend = grid, a, b, mode, extra, blend
        d = grid.d
        if a.is_constant:
            self.abar, self.atil = a.values, None
        else:
            self.abar = a.xi * np.eye(d)
            self.atil = a.values - self.abar.reshape(d, d, *([1] * d))
        full = grid._kvec(odd=False)
        sym = 0.0
        for i in range(d):
            for j in range(d):
                ki = full[i] if i == j else grid.kvec[i]
                kj = full[j] if i == j else grid.kvec[j]
                sym = sym + self.abar[i, j] * ki * kj
        self._dsym = np.broadcast_to(sym, grid.ksq.shape)
        self.v = self._constant_drift()
        self._cache: dict = {}

    def _constant_drift(self):
        if self.b is None:
            return np.zeros(self.grid.d)
        if self.b.time_dependent:
            return None
        bv = self.b.sample(self.grid, 0.0)
        mean = bv.reshape(self.grid.d, -1).mean(axis=1)
        if np.max(np.abs(bv - mean.reshape((-1,) + (1,) * self.grid.d))) <= 1e-14 * (1 + np.abs(mean).max()):
            return mean
        return None

    # cached samples
    def drift(self, t):
        key = ("b", 0.0 if not self.b.time_dependent else float(t))
        if key not in self._cache:
            self._cache[key] = self.b.sample(self.grid, t)
        return self._cache[key]

    def potential(self, t):
        tdep = (self.b is not None and self.b.time_dependent) or (self.extra is not None and self.extra.time_dependent)
        key = ("q", float(t) if tdep else 0.0)
        if key not in self._cache:
            q = np.zeros(self.grid.shape)
            if self.b is not None and self.mode in ("plus", "minus"):
                p, m = self.b.div_parts(self.grid, t)
                q = p if self.mode == "plus" else -m
            if self.extra is not None:
                q = q + self.extra.sample(self.grid, t)
            self._cache[key] = q
        return self._cache[key]

    def _diffusion(self, dt, conj=False):
        key = ("D", dt, conj)
        if key not in self._cache:
            S = np.exp(-dt * self._dsym)
            if self.v is not None and np.any(self.v):
                phase = 0.0
                for vi, k in zip(self.v, self.grid.kvec):
                    phase = phase + vi * k
                S = S * np.exp((1j if conj else -1j) * dt * phase)
            self._cache[key] = S
        return self._cache[key]

    # advection pieces
    def _upwind(self, u, b, transpose=False):
        """Non-conservative upwind approximation of b.grad u (or its transpose)."""
        h, out = self.grid.h, 0.0
        for i in range(self.grid.d):
            ax = u.ndim - self.grid.d + i
            bp, bm = np.maximum(b[i], 0), np.minimum(b[i], 0)
            if not transpose:
                out = out + bp * (u - _shift(u, 1, ax)) + bm * (_shift(u, -1, ax) - u)
            else:
                out = out + (bp * u - _shift(bp * u, -1, ax)) + (_shift(bm * u, 1, ax) - bm * u)
        return out / h

    def _flux(self, u, b, transpose=False):
        """Conservative upwind approximation of div(b u) (or its transpose)."""
        h, out = self.grid.h, 0.0
        for i in range(self.grid.d):
            ax = u.ndim - self.grid.d + i
            bp, bm = np.maximum(b[i], 0), np.minimum(b[i], 0)
            if not transpose:
                F = bp * u + _shift(bm * u, -1, ax)
                out = out + F - _shift(F, 1, ax)
            else:
                out = out - (bp * (_shift(u, -1, ax) - u) + bm * (u - _shift(u, 1, ax)))
        return out / h

    def _advect(self, u, t, dt, transpose=False):
        if self.b is None or self.v is not None:
            return u
        g, b, th = self.grid, self.drift(t), self.blend
        if self.mode == "full":
            lo = self._flux(u, b, transpose)
            hi = (g.div(b * u) if not transpose else -np.sum(b * g.grad(u), axis=0)) if th < 1 else 0.0
        else:
            lo = self._upwind(u, b, transpose)
            hi = (np.sum(b * g.grad(u), axis=0) if not transpose else -g.div(b * u)) if th < 1 else 0.0
        return u - dt * (th * lo + (1 - th) * hi)

    def _correct(self, u, dt):
        if self.atil is None:
            return u
        g = self.grid
        gu = g.grad(u)
        flux = np.einsum("ij...,j...->i...", self.atil, gu)
        return u + dt * g.div(flux)

    def forward(self, u, t, dt, potential=True):
        u = self._advect(u, t, dt)
        if potential:
            u = u * np.exp(-dt * self.potential(t))
        u = self._correct(u, dt)
        return self.grid.ifft(self.grid.fft(u) * self._diffusion(dt))

    def backward(self, w, t, dt, potential=True):
        """Transpose of ``forward`` at the same (t, dt)."""
        w = self.grid.ifft(self.grid.fft(w) * self._diffusion(dt, conj=True))
        w = self._correct(w, dt)
        if potential:
            w = w * np.exp(-dt * self.potential(t))
        return self._advect(w, t, dt, transpose=True)


def project(v: np.ndarray, lo: float | None, hi: float | None, cell: float = 1.0):
    """Clip into [lo, hi] and restore the mass in proportion to headroom.

    Returns (projected values, L1 change). Constants inside the bounds are
    fixed points.
    """
    w = np.clip(v, lo, hi)
    m = float(np.sum(v) - np.sum(w))
    if m > 0 and hi is not None:
        room = hi - w
        tot = float(np.sum(room))
        if tot > 0:
            w = w + m * room / tot
    elif m < 0 and lo is not None:
        room = w - lo
        tot = float(np.sum(room))
        if tot > 0:
            w = w + m * room / tot
    return w, float(np.sum(np.abs(w - v)) * cell)


@dataclass
class Trajectory:
    grid: Grid
    times: np.ndarray
    states: list
    projection: np.ndarray
    direction: str = "forward"
    raw: list | None = None

    def __len__(self):
        return len(self.states)

    def fields(self) -> list:
        return [ScalarField(self.grid, u, t) for u, t in zip(self.states, self.times)]


def _bounds(f: np.ndarray, mode: str, direction: str):
    if mode == "none" and direction == "forward":
        return float(np.min(f)), float(np.max(f))
    return (0.0 if np.min(f) >= 0 else None), None


def _check(u, n):
    if not np.all(np.isfinite(u)):
        raise FloatingPointError(f"non-finite values after step {n}")


def _save_steps(time: TimeGrid, save_times):
    if save_times is None:
        return set(range(time.steps + 1))
    idx = set()
    for t in np.atleast_1d(save_times):
        k = int(round((t - time.s) / time.dt))
        if not 0 <= k <= time.steps or abs(time.s + k * time.dt - t) > 1e-9 * max(1, abs(t)):
            raise ValueError(f"save time {t} is not on the step grid")
        idx.add(k)
    return idx


def evolve(problem: EvolutionProblem, save_times=None, keep_raw: bool = False) -> Trajectory:
    """Run the scheme forward from problem.time.s; emit projected states."""
    diag = problem.diagnostics()
    if diag:
        raise StabilityError("; ".join(diag))
    st = Stepper(problem.grid, problem.a, problem.b, problem.mode, problem.extra, problem.blend)
    tg = problem.time
    keep = _save_steps(tg, save_times)
    lo, hi = _bounds(problem.f, problem.mode, "forward")
    u = problem.f.copy()
    times, states, proj, raw = [], [], [], []

    def emit(k, u):
        times.append(tg.s + k * tg.dt)
        if problem.project:
            w, c = project(u, lo, hi, problem.grid.cell)
        else:
            w, c = u.copy(), 0.0
        states.append(w)
        proj.append(c)
        if keep_raw:
            raw.append(u.copy())

    if 0 in keep:
        emit(0, u)
    for n in range(tg.steps):
        u = st.forward(u, tg.s + n * tg.dt, tg.dt)
        _check(u, n + 1)
        if n + 1 in keep:
            emit(n + 1, u)
    return Trajectory(problem.grid, np.array(times), states, np.array(proj), "forward",
                      raw if keep_raw else None)


def evolve_adjoint(problem: EvolutionProblem, save_times=None, keep_raw: bool = False) -> Trajectory:
    """Transposed scheme run from problem.time.t_end back to problem.time.s.

    problem.f is the terminal datum; emitted times are the start times s'.
    Pairing with a forward run: <S_{s->t} f, g> = <f, S^T_{t->s} g>.
    """
    diag = problem.diagnostics()
    if diag:
        raise StabilityError("; ".join(diag))
    st = Stepper(problem.grid, problem.a, problem.b, problem.mode, problem.extra, problem.blend)
    tg = problem.time
    keep = _save_steps(tg, save_times)
    lo, hi = _bounds(problem.f, problem.mode, "adjoint")
    w = problem.f.copy()
    times, states, proj, raw = [], [], [], []

    def emit(k, w):
        times.append(tg.s + k * tg.dt)
        if problem.project:
            p, c = project(w, lo, hi, problem.grid.cell)
        else:
            p, c = w.copy(), 0.0
        states.append(p)
        proj.append(c)
        if keep_raw:
            raw.append(w.copy())

    if tg.steps in keep:
        emit(tg.steps, w)
    for n in range(tg.steps - 1, -1, -1):
        w = st.backward(w, tg.s + n * tg.dt, tg.dt)
        _check(w, n)
        if n in keep:
            emit(n, w)
    return Trajectory(problem.grid, np.array(times), states, np.array(proj), "adjoint",
                      raw if keep_raw else None)


# kernels

@dataclass
class KernelEstimate:
    """Slices of the kernel u(t, x; s, y).

    direction ``forward``: slices[j](x) = u(t_j, x; s, y), source (s, y).
    direction ``adjoint``: slices[j](z) = u(t_j, y; s, z), i.e. the kernel in
    its backward variable, which carries the conserved mass.
    """

    grid: Grid
    source: tuple
    ladder: np.ndarray
    slices: np.ndarray
    direction: str = "forward"
    dt: float = 0.0
    projection: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reference_c: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def mass(self) -> np.ndarray:
        return np.array([self.grid.integrate(u) for u in self.slices])

    @property
    def mass_defect(self) -> np.ndarray:
        return self.mass - 1.0

    def lags(self) -> np.ndarray:
        return self.ladder - self.source[0]

    def dump(self, path) -> None:
        from heatlab.drift.spec import write_binary
        write_binary(path, self.slices, {"times": [float(t) for t in self.ladder],
                                         "source": [float(self.source[0])] + [float(x) for x in self.source[1]],
                                         "direction": self.direction, "n": self.grid.n, "L": self.grid.L})


def _default_dt(grid, b, ladder, s, dt):
    if dt is not None:
        return dt
    out = min(0.01, (ladder[0] - s) / 8)
    if b is not None:
        sup = max(float(np.max(b.magnitude(grid, t))) for t in ([s] if not b.time_dependent else np.linspace(s, ladder[-1], 8)))
        if sup > 0:
            out = min(out, 0.4 * grid.h / sup)
    return out


def _segment_grid(s, ladder, dt_max):
    """A TimeGrid with uniform steps hitting every ladder time (dt from the gcd-like fit)."""
    span = ladder[-1] - s
    steps = max(1, int(math.ceil(span / dt_max - 1e-9)))
    while True:
        dt = span / steps
        ks = (ladder - s) / dt
        if np.all(np.abs(ks - np.round(ks)) < 1e-6):
            return TimeGrid(s, float(ladder[-1]), dt, steps)
        steps += 1
        if steps > 1_000_000:
            raise ValueError("ladder times are incommensurate with any step below dt_max")


def heat_kernel_estimate(grid: Grid, a: DiffusionMatrix, b: DriftSpec | None, s: float, y, ladder,
                         dt: float | None = None, direction: str = "forward", mode: str = "none",
                         extra: PotentialSpec | None = None, blend: float = 1.0,
                         richardson: bool = False) -> KernelEstimate:
    """Kernel slices from a discrete delta of mass one at the grid point y."""
    ladder = np.asarray(ladder, float)
    if ladder.size < 2:
        raise ValueError("a kernel ladder needs at least two times")
    if np.any(np.diff(ladder) <= 0):
        raise ValueError("ladder times must increase")
    y = grid.point_of(grid.index_of(y))
    dtm = _default_dt(grid, b, ladder, s, dt)
    tg = _segment_grid(s, ladder, dtm)
    if ladder[0] < s + 4 * tg.dt - 1e-12:
        raise ValueError("first ladder time must be at least s + 4 dt")
    delta = grid.delta(y)
    tdep = b is not None and b.time_dependent or extra is not None and extra.time_dependent
    if direction == "forward":
        tr = evolve(EvolutionProblem(grid, a, b, delta, tg, mode, extra, blend), save_times=ladder)
        slices, proj = np.array(tr.states), tr.projection
    elif direction == "adjoint":
        if not tdep:
            # time-homogeneous: one backward run gives every lag
            lags = ladder - s
            tg2 = _segment_grid(0.0, lags, dtm)
            tr = evolve_adjoint(EvolutionProblem(grid, a, b, delta, TimeGrid(0.0, tg2.t_end, tg2.dt, tg2.steps),
                                                 mode, extra, blend), save_times=tg2.t_end - lags)
            order = np.argsort(tr.times)[::-1]
            slices = np.array([tr.states[i] for i in order])
            proj = tr.projection[order]
        else:
            slices, proj = [], []
            for t in ladder:
                tgj = _segment_grid(s, np.array([t]), tg.dt)
                tr = evolve_adjoint(EvolutionProblem(grid, a, b, delta, tgj, mode, extra, blend), save_times=[s])
                slices.append(tr.states[0])
                proj.append(tr.projection[0])
            slices, proj = np.array(slices), np.array(proj)
    else:
        raise ValueError("direction must be 'forward' or 'adjoint'")
    est = KernelEstimate(grid, (s, tuple(y)), ladder, slices, direction, tg.dt, np.asarray(proj),
                         a.reference, {"mode": mode, "blend": blend})
    if richardson:
        est = _richardson(est, a, b, s, y, ladder, dt, direction, mode, extra, blend)
    return est


def _richardson(coarse, a, b, s, y, ladder, dt, direction, mode, extra, blend):
    g = coarse.grid
    fine_grid = Grid(g.d, 2 * g.n, g.L)
    fine = heat_kernel_estimate(fine_grid, a, b, s, y, ladder, None if dt is None else dt / 2,
                                direction, mode, extra, blend)
    sub = (slice(None),) + (slice(0, None, 2),) * g.d
    p = 1.0 if (b is not None and blend > 0) else 2.0
    w = 2.0**p
    slices = (w * fine.slices[sub] - coarse.slices) / (w - 1)
    slices = np.maximum(slices, 0.0)
    out = KernelEstimate(g, coarse.source, coarse.ladder, slices, direction, coarse.dt, coarse.projection,
                         coarse.reference_c, {**coarse.meta, "richardson_order": p})
    return out


# Duhamel coupling

@dataclass
class DuhamelProbe:
    t: float
    x: tuple
    u: float
    h: float
    integral: float
    residual: float


@dataclass
class DuhamelReport:
    max_residual: float
    probes: list
    skipped: int
    method: str


def _probe_points(grid, y, t_minus_s, count):
    """Grid points within 2 sqrt(t - s) of y along the axes and diagonals."""
    r = 2 * math.sqrt(t_minus_s)
    out = [tuple(y)]
    dirs = list(np.eye(grid.d)) + [np.ones(grid.d) / math.sqrt(grid.d)]
    for k in range(1, count + 1):
        for e in dirs:
            p = np.asarray(y) + (k / count) * r * e
            q = grid.point_of(grid.index_of(p))
            if np.linalg.norm(grid.displacement(y)[(slice(None),) + grid.index_of(q)]) <= r + 1e-12:
                out.append(tuple(q))
    uniq = []
    for p in out:
        if p not in uniq:
            uniq.append(p)
    return uniq


def duhamel_residual(grid: Grid, a: DiffusionMatrix, b: DriftSpec | None, V: PotentialSpec,
                     s: float, y, ladder, probes=None, dt: float | None = None, method: str = "trapezoid",
                     blend: float = 1.0, stride: int = 1, floor: float = 1e-14) -> DuhamelReport:
    """Residual of u = h - int_s^t <u(t,x;tau,.) V h(tau,.;s,y)> dtau.

    u is the kernel with drift b (no potential) and h the kernel with the
    extra potential -V. ``method``:
      trapezoid    tau integral by the trapezoid rule on every ``stride``-th step
      exact        discrete telescoping sum, exact up to round-off
      first_order  u replaced by h inside the integral (error O(V^2))
    Only time-homogeneous b and V are supported here.
    """
    if (b is not None and b.time_dependent) or V.time_dependent:
        raise ValueError("the Duhamel probe needs time-homogeneous drift and potential")
    ladder = np.asarray(ladder, float)
    y = tuple(grid.point_of(grid.index_of(y)))
    dtm = _default_dt(grid, b, ladder, s, dt)
    tg = _segment_grid(s, ladder, dtm)
    N, dts = tg.steps, tg.dt
    minusV = V.scaled(-1.0)
    su = Stepper(grid, a, b, "none", None, blend)
    sh = Stepper(grid, a, b, "none", minusV, blend)
    if tg.dt * (0 if b is None else float(np.max(b.magnitude(grid, 0.0)))) / grid.h > CFL_LIMIT:
        raise StabilityError("Duhamel run violates the CFL restriction")
    vals = V.sample(grid, 0.0)
    # forward h-run from the delta at y
    f = grid.delta(y)
    fs = [f]
    for n in range(N):
        f = sh.forward(f, s + n * dts, dts)
        _check(f, n + 1)
        fs.append(f)
    ends = [int(round((t - s) / dts)) for t in ladder]
    if probes is None:
        probes = []
        for t in ladder:
            probes += [(float(t), p) for p in _probe_points(grid, y, t - s, 2)]
    else:
        probes = [(float(t), tuple(p)) for t, p in probes]
    stepper_rows = sh if method == "first_order" else su
    rows_cache: dict = {}
    out, skipped = [], 0
    for t, x in probes:
        n = int(round((t - s) / dts))
        if n not in ends and not 0 < n <= N:
            raise ValueError(f"probe time {t} is not on the step grid")
        if x not in rows_cache:
            w = grid.delta(x)
            rows = [w]
            for m in range(N):
                # time-homogeneous: the step time is irrelevant
                w = stepper_rows.backward(w, s, dts)
                rows.append(w)
            # u(t, x; t - m dts, .) when the rows come from the u-run
            rows_cache[x] = rows
        rows = rows_cache[x]
        idx = grid.index_of(y)
        h_val = float(fs[n][grid.index_of(x)])
        if method == "first_order":
            # u itself from the u-run (forward column at x)
            u_val = _u_value(grid, su, y, x, n, s, dts)
        else:
            u_val = float(rows[n][idx])
        if max(abs(h_val), abs(u_val)) < floor:
            skipped += 1
            continue
        if method == "trapezoid":
            ks = list(range(0, n + 1, stride))
            if ks[-1] != n:
                ks.append(n)
            taus = np.array(ks) * dts
            integrand = np.array([grid.inner(rows[n - k], vals * fs[k]) for k in ks])
            integral = float(np.trapezoid(integrand, taus))
        else:
            integral = 0.0
            for k in range(n):
                diff = sh.forward(fs[k], s, dts) - su.forward(fs[k], s, dts)
                integral += grid.inner(rows[n - 1 - k], diff)
        res = abs(u_val - (h_val - integral)) / max(abs(h_val), floor)
        out.append(DuhamelProbe(t, x, u_val, h_val, integral, res))
    mx = max((p.residual for p in out), default=0.0)
    return DuhamelReport(mx, out, skipped, method)


def _u_value(grid, su, y, x, n, s, dts):
    f = grid.delta(y)
    for k in range(n):
        f = su.forward(f, s, dts)
    return float(f[grid.index_of(x)])


# twisted operators

@dataclass
class MoserReport:
    design: list
    norms: np.ndarray
    c: float
    c4: float
    alpha_exponent: float
    truncation: float


def _unit_inputs(grid, center, tau, rng, n_random=4):
    out = []
    for f in (0.5, 0.71, 1.0, 1.41, 2.0):
        sd = f * math.sqrt(2 * tau)
        psi = gaussian_on_grid(grid, 1.0, sd**2 / 2, center)
        out.append(psi / grid.norm(psi))
    env = gaussian_on_grid(grid, 1.0, tau, center)
    z = grid.displacement(center)
    for _ in range(n_random):
        k = rng.normal(size=grid.d) / math.sqrt(2 * tau)
        ph = rng.uniform(0, 2 * math.pi)
        psi = env * (1 + 0.5 * np.cos(np.tensordot(k, z, axes=1) + ph))
        out.append(psi / grid.norm(psi))
    return out


def moser_norm_probe(grid: Grid, a: DiffusionMatrix, b: DriftSpec | None, alphas, lags,
                     s: float = 0.0, dt: float | None = None, seed: int = 0, blend: float = 1.0,
                     tol: float = 0.01) -> MoserReport:
    """2 -> infinity norms of e^{alpha.x} T^{t,s} e^{-alpha.x} over unit-L2 inputs.

    Inputs live near the box centre; the twisted output is read on the
    ball of radius L/2 around it. Fits log N = log c - (d/4) log tau + c4 |alpha|^2 tau.
    """
    alphas = [np.asarray(al, float) for al in alphas]
    lags = np.asarray(lags, float)
    for al in alphas:
        if np.linalg.norm(al) > 2 / grid.L + 1e-12:
            raise ValueError("twist |alpha| must not exceed 2/L on this box")
    rng = np.random.default_rng(seed)
    center = np.zeros(grid.d)
    r = grid.radius(center)
    window = r <= grid.L / 2
    z = grid.displacement(center)
    dtm = _default_dt(grid, b, lags + s, s, dt)
    design, norms, trunc = [], [], 0.0
    for tau in lags:
        tg = _segment_grid(s, np.array([s + tau]), dtm)
        inputs = _unit_inputs(grid, center, tau, rng)
        for al in alphas:
            tw = np.exp(np.tensordot(al, z, axes=1))
            best = 0.0
            for f in inputs:
                pr = EvolutionProblem(grid, a, b, f / tw, tg, "none", None, blend, project=False)
                raw = evolve(pr, save_times=[s + tau]).states[-1]
                u = raw * tw
                best = max(best, float(np.max(np.abs(u[window]))))
                # periodic images enter the window with weight at most this
                outside = float(np.max(np.abs(raw[~window]))) if np.any(~window) else 0.0
                trunc = max(trunc, outside * float(np.max(tw[window])) / max(best, 1e-300))
            design.append((float(tau), tuple(al)))
            norms.append(best)
    if trunc > tol:
        raise ValueError(f"window truncation error {trunc:.3g} exceeds {tol}")
    norms = np.array(norms)
    taus = np.array([d[0] for d in design])
    a2 = np.array([float(np.dot(d[1], d[1])) for d in design])
    y = np.log(norms) + (grid.d / 4) * np.log(taus)
    A = np.stack([np.ones_like(taus), a2 * taus], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    # exponent of |alpha| from the excess over alpha = 0 at each lag
    pts = []
    for tau in lags:
        base = [n for (tt, al), n in zip(design, norms) if tt == tau and not np.any(al)]
        if not base:
            continue
        for (tt, al), n in zip(design, norms):
            ex = math.log(n / base[0]) if tt == tau else 0.0
            if tt == tau and np.any(al) and ex > 0:
                pts.append((math.log(np.linalg.norm(al)), math.log(ex)))
    expo = float(np.polyfit(*np.array(pts).T, 1)[0]) if len(pts) >= 2 else float("nan")
    return MoserReport(design, norms, float(math.exp(coef[0])), float(coef[1]), expo, trunc)
