"""Built-in drifts and potentials, plus the declarative text format."""
from __future__ import annotations

import shlex
import warnings
from dataclasses import dataclass

import numpy as np

from heatlab.field import Grid, axis_power_average, radial_sample, singular_sample
from heatlab.drift.spec import DriftSpec, PotentialSpec, load_sampled_drift


@dataclass(frozen=True)
class Bump:
    """Smooth compactly supported bump exp(1 - 1/(1 - |x-c|^2/R^2)), peak 1."""

    radius: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)

    def _s(self, grid):
        c = np.asarray(self.center[: grid.d], float)
        z = grid.displacement(c)
        return z, np.sum(z**2, axis=0) / self.radius**2

    def value(self, grid: Grid) -> np.ndarray:
        _, s = self._s(grid)
        out = np.zeros(grid.shape)
        m = s < 1
        out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m]))
        return out

    def grad(self, grid: Grid) -> np.ndarray:
        z, s = self._s(grid)
        phi = self.value(grid)
        fac = np.zeros(grid.shape)
        m = s < 1
        fac[m] = -2.0 / (self.radius**2 * (1.0 - s[m]) ** 2)
        return phi * fac * z


def _odd_ksq(grid: Grid) -> np.ndarray:
    out = 0.0
    for k in grid.kvec:
        out = out + k**2
    return np.broadcast_to(out, grid.ksq.shape)


# drifts

def constant(v) -> DriftSpec:
    v = np.asarray(v, float)

    def rule(g, t):
        return np.broadcast_to(v[: g.d].reshape((g.d,) + (1,) * g.d), (g.d,) + g.shape).copy()

    return DriftSpec("constant", rule, div_rule=lambda g, t: np.zeros(g.shape),
                     params={"v": v.tolist()}, meta={"bound": float(np.linalg.norm(v))})


def hardy(kappa: float, center=None) -> DriftSpec:
    """b = kappa x/|x|^2, |b| = kappa/|x|, div b = (d-2) kappa/|x|^2."""
    c = None if center is None else np.asarray(center, float)

    def rule(g, t):
        return kappa * singular_sample(g, lambda z: z / np.sum(z**2, axis=0), c)

    def mag(g, t):
        return kappa * radial_sample(g, lambda r: 1.0 / r, c)

    def div(g, t):
        return (g.d - 2) * kappa * radial_sample(g, lambda r: 1.0 / r**2, c)

    def split(g, t):
        dv = div(g, t)
        return np.maximum(dv, 0), np.maximum(-dv, 0)

    return DriftSpec("hardy", rule, div_rule=div, split_rule=split, magnitude_rule=mag,
                     singular=True, params={"kappa": kappa},
                     meta={"mf_bound": 2 * abs(kappa), "div_formbound": 4 * kappa**2})


def mprime_field(W: PotentialSpec, warn_ratio: float = 0.1) -> DriftSpec:
    """b = grad (-Laplacian)^{-1} W on the torus, W mean-subtracted first.

    By construction div b = -(W - mean W); the split assigns
    (div b)_+ = (mean W - W)_+ and (div b)_- = (W - mean W)_+.
    """

    def centred(g, t):
        w = W.sample(g, t)
        mean = float(np.mean(w))
        scale = float(np.max(np.abs(w)))
        if scale > 0 and abs(mean) / scale > warn_ratio:
            warnings.warn(f"mean of W is {abs(mean) / scale:.3f} of its peak; the torus distorts the example")
        return w - mean

    def rule(g, t):
        ks = _odd_ksq(g)
        inv = np.zeros_like(ks)
        np.divide(1.0, ks, out=inv, where=ks > 0)
        return g.grad(g.multiply(centred(g, t), inv))

    def div(g, t):
        return -centred(g, t)

    def split(g, t):
        w = centred(g, t)
        return np.maximum(-w, 0), np.maximum(w, 0)

    return DriftSpec("mprime", rule, div_rule=div, split_rule=split,
                     params={"W": W.name, **W.params})


def example_kato_not_L2(phi1: Bump, phi2: Bump, eps: float) -> DriftSpec:
    """b = (phi1 |x_2|^(-1+eps), phi2 |x_1|^(-1+eps), 0, ...).

    The singular planes are regularized at grid scale by exact cell averages
    of |s|^(-1+eps) across each plane.
    """
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    a = -1.0 + eps

    def prof(g, i):
        return axis_power_average(g.coords[i], g.h, a)

    def rule(g, t):
        if g.d < 2:
            raise ValueError("the plane example needs d >= 2")
        b = np.zeros((g.d,) + g.shape)
        b[0] = phi1.value(g) * prof(g, 1)
        b[1] = phi2.value(g) * prof(g, 0)
        return b

    def div(g, t):
        return phi1.grad(g)[0] * prof(g, 1) + phi2.grad(g)[1] * prof(g, 0)

    def split(g, t):
        dv = div(g, t)
        return np.maximum(dv, 0), np.maximum(-dv, 0)

    meta = {"expect": "Kato value stabilizes under refinement; local L2 mass grows"}
    return DriftSpec("kato_plane", rule, div_rule=div, split_rule=split, singular=eps < 1,
                     params={"eps": eps, "radius": phi1.radius}, meta=meta)


def smooth_window(r: np.ndarray, r1: float, r2: float) -> np.ndarray:
    """C-infinity cutoff equal to 1 for r <= r1 and 0 for r >= r2."""
    s = np.clip((r - r1) / (r2 - r1), 0.0, 1.0)

    def f(x):
        out = np.zeros_like(x)
        m = x > 0
        out[m] = np.exp(-1.0 / x[m])
        return out
    return f(1 - s) / (f(1 - s) + f(s))


def log_matrix(grid: Grid, c: float, i: int = 0, j: int = 1, window=(0.5, 0.9)) -> np.ndarray:
    """Skew matrix field with B_ij = c log|x| w(|x|) = -B_ji, zero elsewhere."""
    r1, r2 = window[0] * grid.L, window[1] * grid.L
    F = c * radial_sample(grid, lambda r: np.log(r) * smooth_window(r, r1, r2))
    B = np.zeros((grid.d, grid.d) + grid.shape)
    B[i, j] = F
    B[j, i] = -F
    return B


def matrix_divergence(grid: Grid, B: np.ndarray) -> np.ndarray:
    """Columns of the divergence: b_j = sum_i d_i B_ij."""
    out = np.zeros((grid.d,) + grid.shape)
    for j in range(grid.d):
        out[j] = grid.div(B[:, j])
    return out


def rotational_bmo(c: float, window=(0.5, 0.9)) -> DriftSpec:
    """Divergence-free b = div B with B_12 = c log|x| (windowed) = -B_21."""

    def rule(g, t):
        return matrix_divergence(g, log_matrix(g, c, window=window))

    return DriftSpec("rotational_bmo", rule, div_rule=lambda g, t: np.zeros(g.shape),
                     singular=True, params={"c": c})


def lps_demo(radius: float = 1.0, power: float = 0.25) -> DriftSpec:
    """b(t, x) = t^(-power) phi(x) e_1, zero for t <= 0."""
    phi = Bump(radius)

    def rule(g, t):
        b = np.zeros((g.d,) + g.shape)
        if t > 0:
            b[0] = t ** (-power) * phi.value(g)
        return b

    def div(g, t):
        return (t ** (-power) if t > 0 else 0.0) * phi.grad(g)[0]

    return DriftSpec("lps_demo", rule, div_rule=div, time_dependent=True, singular=True,
                     params={"radius": radius, "power": power})


# potentials

def ball_indicator(radius: float = 1.0, center=None, sub: int = 6) -> PotentialSpec:
    """Cell averages of the indicator of B(center, radius)."""

    def rule(g, t):
        c = np.zeros(g.d) if center is None else np.asarray(center, float)[: g.d]
        r = g.radius(c)
        out = (r < radius).astype(float)
        edge = np.abs(r - radius) < g.h * np.sqrt(g.d)
        u = (np.arange(sub) + 0.5) / sub - 0.5
        pts = np.stack([p.ravel() for p in np.meshgrid(*([u] * g.d), indexing="ij")])
        z = g.displacement(c)[:, edge]
        inside = np.sum((z[:, :, None] + g.h * pts[:, None, :]) ** 2, axis=0) < radius**2
        out[edge] = inside.mean(axis=1)
        return out

    return PotentialSpec("ball", rule, params={"radius": radius})


def inverse_square(kappa: float, center=None) -> PotentialSpec:
    """V = kappa^2/|x|^2 with the singular cells averaged."""
    return PotentialSpec("inverse_square",
                         lambda g, t: kappa**2 * radial_sample(g, lambda r: 1.0 / r**2, center),
                         params={"kappa": kappa})


def time_window(V: PotentialSpec, t0: float, t1: float) -> PotentialSpec:
    def rule(g, t):
        return V.sample(g, t) if t0 <= t < t1 else np.zeros(g.shape)
    br = tuple(sorted({t0, t1} - {0.0}))
    return PotentialSpec(f"{V.name}[{t0},{t1})", rule, br, params=V.params)


def dipole_potential(nu: float, radius: float = 1.0, sep: float = 1.5) -> PotentialSpec:
    """nu * (1_B(sep e1) - 1_B(-sep e1)), mean zero."""
    plus = ball_indicator(radius, center=(sep, 0, 0))
    minus = ball_indicator(radius, center=(-sep, 0, 0))
    return PotentialSpec("dipole", lambda g, t: nu * (plus.sample(g) - minus.sample(g)),
                         params={"nu": nu, "radius": radius, "sep": sep})


# declarative text format

BUILTINS = ("hardy", "mprime", "kato_plane", "constant", "rotational_bmo", "lps_demo", "none")


def _num_list(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


def parse_drift(text: str, grid: Grid | None = None) -> DriftSpec:
    """Build a drift from e.g. ``hardy kappa=0.3`` or ``constant v=1,0,0``."""
    parts = shlex.split(text)
    if not parts:
        raise ValueError("empty drift description")
    name, kv = parts[0], {}
    for p in parts[1:]:
        if "=" not in p:
            raise ValueError(f"drift parameter {p!r} is not key=value")
        k, v = p.split("=", 1)
        kv[k.strip()] = v.strip()
    if name == "file":
        if grid is None:
            raise ValueError("sampled drifts need a grid")
        return load_sampled_drift(kv["path"], grid)
    if name not in BUILTINS:
        raise ValueError(f"unknown drift {name!r}; built-ins are {', '.join(BUILTINS)}")
    if name == "none":
        return constant([0.0, 0.0, 0.0])
    if name == "constant":
        return constant(_num_list(kv.get("v", "0,0,0")))
    if name == "hardy":
        center = _num_list(kv["center"]) if "center" in kv else None
        return hardy(float(kv.get("kappa", 0.3)), center)
    if name == "mprime":
        nu = float(kv.get("nu", 0.2))
        radius = float(kv.get("radius", 1.0))
        return mprime_field(ball_indicator(radius).scaled(nu))
    if name == "kato_plane":
        radius = float(kv.get("radius", 1.0))
        return example_kato_not_L2(Bump(radius), Bump(radius), float(kv.get("eps", 0.25)))
    if name == "rotational_bmo":
        return rotational_bmo(float(kv.get("c", 0.3)))
    return lps_demo(float(kv.get("radius", 1.0)), float(kv.get("power", 0.25)))
