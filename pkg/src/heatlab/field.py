"""Periodic grids, spectral calculus, Gaussian kernels and cell quadrature.

Every field lives on the torus [-L, L)^d sampled at n points per axis.
Reductions use the cell measure h^d, derivatives and fractional powers are
diagonal in Fourier space.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

IMAGE_TOL = 1e-14
CLIP_TOL = 1e-12


def _workers() -> int:
    return int(os.environ.get("HEATLAB_WORKERS", "1") or 1)


class SingularModeError(ValueError):
    """Raised when a negative power hits the zero Fourier mode."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on [-L, L)^d."""

    d: int
    n: int
    L: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"points per axis must be even and >= 8, got {self.n}")
        if not self.L > 0:
            raise ValueError("half width must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    @property
    def cell(self) -> float:
        return self.h ** self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def coords(self) -> tuple:
        return tuple(np.meshgrid(*([self.axis] * self.d), indexing="ij"))

    @cached_property
    def _k1(self) -> np.ndarray:
        return 2 * np.pi * sfft.fftfreq(self.n, d=self.h)

    @cached_property
    def _k1_half(self) -> np.ndarray:
        return 2 * np.pi * sfft.rfftfreq(self.n, d=self.h)

    def _kvec(self, odd: bool) -> list:
        # wavenumbers broadcast to the rfft layout; the Nyquist entry is
        # dropped for odd-order symbols so that outputs stay real
        ks = []
        for i in range(self.d):
            k = (self._k1_half if i == self.d - 1 else self._k1).copy()
            if odd:
                k[self.n // 2] = 0.0
            sh = [1] * self.d
            sh[i] = k.size
            ks.append(k.reshape(sh))
        return ks

    @cached_property
    def kvec(self) -> list:
        return self._kvec(odd=True)

    @cached_property
    def ksq(self) -> np.ndarray:
        out = 0.0
        for k in self._kvec(odd=False):
            out = out + k**2
        return np.broadcast_to(out, self._half_shape).copy()

    @property
    def _half_shape(self) -> tuple:
        return (self.n,) * (self.d - 1) + (self.n // 2 + 1,)

    # transforms
    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, axes=self._axes(f), workers=_workers())

    def ifft(self, F: np.ndarray) -> np.ndarray:
        return sfft.irfftn(F, s=self.shape, axes=self._axes(F), workers=_workers())

    def _axes(self, f) -> tuple:
        return tuple(range(f.ndim - self.d, f.ndim))

    def multiply(self, f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(f) * symbol)

    # calculus on raw arrays
    def grad(self, f: np.ndarray) -> np.ndarray:
        F = self.fft(f)
        return np.stack([self.ifft(1j * k * F) for k in self.kvec])

    def lap(self, f: np.ndarray) -> np.ndarray:
        return self.multiply(f, -self.ksq)

    def div(self, F: np.ndarray) -> np.ndarray:
        out = 0.0
        for i, k in enumerate(self.kvec):
            out = out + 1j * k * self.fft(F[i])
        return self.ifft(out)

    # reductions
    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(f) * self.cell)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(np.vdot(f, g).real * self.cell)

    def norm(self, f: np.ndarray, p: float = 2.0) -> float:
        a = np.abs(f)
        if np.isinf(p):
            return float(a.max())
        return float((np.sum(a**p) * self.cell) ** (1.0 / p))

    def mode_inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Inner product evaluated from full complex spectra (Parseval)."""
        F = sfft.fftn(f)
        G = sfft.fftn(g)
        return float(np.vdot(F, G).real * self.cell / self.size)

    # geometry
    def displacement(self, center=None) -> np.ndarray:
        """Minimum-image displacement x - center, shape (d, *shape)."""
        c = np.zeros(self.d) if center is None else np.asarray(center, float)
        out = []
        for i in range(self.d):
            z = self.coords[i] - c[i]
            out.append(z - 2 * self.L * np.round(z / (2 * self.L)))
        return np.stack(out)

    def radius(self, center=None) -> np.ndarray:
        return np.sqrt(np.sum(self.displacement(center) ** 2, axis=0))

    def index_of(self, point) -> tuple:
        p = np.asarray(point, float)
        idx = np.round((p + self.L) / self.h).astype(int) % self.n
        return tuple(int(i) for i in idx)

    def point_of(self, index) -> np.ndarray:
        return self.axis[np.asarray(index)]

    def delta(self, point) -> np.ndarray:
        f = np.zeros(self.shape)
        f[self.index_of(point)] = 1.0 / self.cell
        return f


@dataclass(frozen=True)
class TimeGrid:
    s: float
    t_end: float
    dt: float
    steps: int

    def __post_init__(self):
        if not (0 <= self.s < self.t_end):
            raise ValueError("need 0 <= s < t_end")
        if self.steps < 1 or self.dt <= 0:
            raise ValueError("need positive dt and steps")
        if abs(self.dt * self.steps - (self.t_end - self.s)) > 1e-9 * max(1.0, self.t_end):
            raise ValueError("dt * steps must equal t_end - s")

    @classmethod
    def from_steps(cls, s: float, t_end: float, steps: int) -> "TimeGrid":
        return cls(s, t_end, (t_end - s) / steps, steps)

    @classmethod
    def from_dt(cls, s: float, t_end: float, dt_max: float) -> "TimeGrid":
        steps = max(1, int(math.ceil((t_end - s) / dt_max - 1e-9)))
        return cls.from_steps(s, t_end, steps)

    @property
    def times(self) -> np.ndarray:
        return self.s + self.dt * np.arange(self.steps + 1)


def _check_finite(values):
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite samples")


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"expected shape {self.grid.shape}, got {self.values.shape}")
        _check_finite(self.values)


@dataclass(frozen=True)
class VectorField:
    grid: Grid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.values.shape != (self.grid.d,) + self.grid.shape:
            raise ValueError("vector field must have d components on the grid")
        _check_finite(self.values)

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=0))


@dataclass(frozen=True)
class DiffusionMatrix:
    """Symmetric matrix a, constant (d, d) or per point (d, d, *shape)."""

    values: np.ndarray
    sigma: float
    xi: float
    eig_range: tuple = field(init=False, repr=False)

    def __post_init__(self):
        a = np.asarray(self.values, float)
        d = a.shape[0]
        if a.shape[:2] != (d, d):
            raise ValueError("diffusion matrix must be d x d")
        if not np.allclose(a, np.swapaxes(a, 0, 1), atol=1e-14):
            raise ValueError("diffusion matrix must be symmetric")
        flat = np.moveaxis(a.reshape(d, d, -1), -1, 0)
        ev = np.linalg.eigvalsh(flat)
        lo, hi = float(ev.min()), float(ev.max())
        if lo < self.sigma - 1e-12 or hi > self.xi + 1e-12:
            raise ValueError(f"eigenvalues [{lo}, {hi}] leave the window [{self.sigma}, {self.xi}]")
        object.__setattr__(self, "values", a)
        object.__setattr__(self, "eig_range", (lo, hi))

    @classmethod
    def identity(cls, d: int, scale: float = 1.0) -> "DiffusionMatrix":
        return cls(scale * np.eye(d), scale, scale)

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def is_constant(self) -> bool:
        return self.values.ndim == 2

    @property
    def reference(self) -> float:
        """Scalar diffusivity used to scale envelope candidates."""
        if self.is_constant:
            return float(np.trace(self.values) / self.d)
        return float(np.mean(np.trace(self.values)) / self.d)


# Gaussian kernels

def _image_sum_1d(z: np.ndarray, c: float, t: float, period: float | None) -> np.ndarray:
    pref = (4 * np.pi * c * t) ** -0.5
    out = pref * np.exp(-(z**2) / (4 * c * t))
    if period is None:
        return out
    m = 1
    while True:
        add = pref * (np.exp(-((z + m * period) ** 2) / (4 * c * t))
                      + np.exp(-((z - m * period) ** 2) / (4 * c * t)))
        out = out + add
        if np.max(add) < IMAGE_TOL:
            return out
        m += 1


def gaussian_kernel(c: float, t: float, x, y, d: int | None = None, L: float | None = None):
    """k_c(t, x, y) = (4 pi c t)^(-d/2) exp(-|x - y|^2 / (4 c t)).

    With ``L`` given, the kernel is periodized over the torus [-L, L)^d.
    """
    if not c > 0 or not t > 0:
        raise ValueError("gaussian kernel needs c > 0 and t > 0")
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    d = x.shape[-1] if d is None else d
    z = x - y
    if L is not None:
        z = z - 2 * L * np.round(z / (2 * L))
    period = None if L is None else 2 * L
    out = 1.0
    for i in range(d):
        out = out * _image_sum_1d(z[..., i], c, t, period)
    return float(out) if np.ndim(out) == 0 else out


def gaussian_on_grid(grid: Grid, c: float, t: float, center=None, periodic: bool = True) -> np.ndarray:
    """Samples of k_c(t, ., center) on the grid (periodized by default)."""
    if not c > 0 or not t > 0:
        raise ValueError("gaussian kernel needs c > 0 and t > 0")
    z = grid.displacement(center)
    period = 2 * grid.L if periodic else None
    out = 1.0
    for i in range(grid.d):
        out = out * _image_sum_1d(z[i], c, t, period)
    return np.broadcast_to(out, grid.shape).copy()


# spectral operations on fields

def spectral_gradient(f: ScalarField) -> VectorField:
    return VectorField(f.grid, f.grid.grad(f.values), f.t)


def spectral_laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, f.grid.lap(f.values), f.t)


def frac_power_symbol(grid: Grid, lam: float, s: float) -> np.ndarray:
    base = lam + grid.ksq
    if s < 0 and np.any(base == 0):
        raise SingularModeError("negative power of a vanishing symbol at the zero mode")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return base**s


def frac_power(lam: float, s: float, f: ScalarField) -> ScalarField:
    """(lam - Laplacian)^s applied mode by mode."""
    g = f.grid
    return ScalarField(g, g.multiply(f.values, frac_power_symbol(g, lam, s)), f.t)


def sobolev_norm(grid: Grid, f: np.ndarray, alpha: float, lam: float = 1.0) -> float:
    """Bessel potential norm ||(lam - Laplacian)^(alpha/2) f||_2."""
    return grid.norm(grid.multiply(f, frac_power_symbol(grid, lam, alpha / 2)))


def heat_mollify_array(grid: Grid, eps: float, f: np.ndarray, clip: bool = True):
    """e^{eps Laplacian} f on raw arrays; returns (values, clipped mass)."""
    if not eps > 0:
        raise ValueError("mollification time must be positive")
    out = grid.multiply(f, np.exp(-eps * grid.ksq))
    clipped = 0.0
    if clip and f.ndim == grid.d and np.min(f) >= 0:
        neg = out < 0
        scale = max(float(np.max(np.abs(out))), 1e-300)
        if np.any(neg) and -np.min(out) <= CLIP_TOL * scale:
            clipped = float(-np.sum(out[neg]) * grid.cell)
            out[neg] = 0.0
    return out, clipped


def heat_mollify(eps: float, f: ScalarField, report: bool = False):
    """e^{eps Laplacian} f; negative round-off of non-negative data is clipped."""
    vals, clipped = heat_mollify_array(f.grid, eps, f.values)
    out = ScalarField(f.grid, vals, f.t)
    return (out, clipped) if report else out


# cell quadrature for singular radial profiles

def _subcell(d: int, m: int) -> np.ndarray:
    u = (np.arange(m) + 0.5) / m - 0.5
    pts = np.meshgrid(*([u] * d), indexing="ij")
    return np.stack([p.ravel() for p in pts], axis=1)


def singular_sample(grid: Grid, fn, center=None, rings: int = 1, sub: int = 16) -> np.ndarray:
    """Samples of fn(z), z = x - center, with the cells nearest the center averaged.

    ``fn`` maps displacements of shape (d, ...) to values of shape (..., )
    or (k, ...). Cells within Chebyshev distance ``rings`` of the cell
    holding ``center`` are replaced by their cell average on a sub^d
    midpoint lattice, which keeps integrable singularities finite.
    """
    c = np.zeros(grid.d) if center is None else np.asarray(center, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.asarray(fn(grid.displacement(c)), float).copy()
    lead = out.shape[: out.ndim - grid.d]
    idx0 = np.array(grid.index_of(c))
    base = grid.point_of(idx0) - c
    base = base - 2 * grid.L * np.round(base / (2 * grid.L))
    pts = _subcell(grid.d, sub)
    offs = np.array(np.meshgrid(*([np.arange(-rings, rings + 1)] * grid.d), indexing="ij"))
    for off in offs.reshape(grid.d, -1).T:
        z = (base + off * grid.h)[:, None] + pts.T * grid.h
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.asarray(fn(z), float)
        cell = tuple((idx0 + off) % grid.n)
        out[(slice(None),) * len(lead) + cell] = vals.mean(axis=-1)
    if not np.all(np.isfinite(out)):
        warnings.warn("singular sampling produced non-finite values away from the center")
    return out


def radial_sample(grid: Grid, prof, center=None, rings: int = 1, sub: int = 16) -> np.ndarray:
    """Samples of prof(|x - center|) with the nearest cells averaged."""
    return singular_sample(grid, lambda z: prof(np.sqrt(np.sum(z**2, axis=0))), center, rings, sub)


def axis_power_average(s: np.ndarray, h: float, a: float) -> np.ndarray:
    """Cell average of |s|^a over [s - h/2, s + h/2], a > -1."""
    if a <= -1:
        raise ValueError("exponent must exceed -1")

    def prim(x):
        return np.sign(x) * np.abs(x) ** (a + 1) / (a + 1)

    return (prim(s + h / 2) - prim(s - h / 2)) / h
