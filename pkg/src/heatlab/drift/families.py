"""Finite trial-function families used by the class estimators."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from heatlab.field import Grid, gaussian_on_grid


@dataclass(frozen=True)
class Member:
    """One trial function.

    kind ``gauss``: exp(-|x - c|^2 / (2 w^2)), params = (w,).
    kind ``hardy``: (|x-c|^2 + r0^2)^(-(d-2)/4) times a raised-cosine cutoff
    in log r between r0 and R, params = (r0, R).
    """

    kind: str
    center: tuple
    params: tuple

    def evaluate(self, grid: Grid) -> np.ndarray:
        c = np.asarray(self.center[: grid.d], float)
        if self.kind == "gauss":
            (w,) = self.params
            return gaussian_on_grid(grid, 1.0, w**2 / 2, c) * (2 * np.pi * w**2) ** (grid.d / 2)
        if self.kind == "hardy":
            r0, R = self.params
            r = grid.radius(c)
            return hardy_profile(r, r0, R, grid.d)
        raise ValueError(f"unknown member kind {self.kind!r}")

    @property
    def scale(self) -> float:
        return self.params[0] if self.kind == "gauss" else self.params[1]


def hardy_profile(r, r0: float, R: float, d: int):
    """Hardy optimizer |x|^(-(d-2)/2), flattened inside r0 and cut off at R."""
    a = (d - 2) / 2.0
    tau = np.clip(np.log(np.maximum(r, 1e-300) / r0) / np.log(R / r0), 0.0, 1.0)
    return (r**2 + r0**2) ** (-a / 2) * 0.5 * (1 + np.cos(np.pi * tau))


@dataclass(frozen=True)
class TestFunctionFamily:
    """Anchors (widest members, used to fix the constant part) and members."""

    anchors: tuple
    members: tuple
    budget: int = 10_000

    def __post_init__(self):
        if not self.anchors and not self.members:
            raise ValueError("a test-function family must be non-empty")

    def all(self) -> tuple:
        return (self.anchors + self.members)[: self.budget + len(self.anchors)]

    def extend(self, more) -> "TestFunctionFamily":
        return TestFunctionFamily(self.anchors, self.members + tuple(more), self.budget)

    def __len__(self):
        return len(self.anchors) + min(len(self.members), self.budget)


def default_family(grid: Grid, center=None, n_widths: int = 7, hardy: bool = True,
                   offsets: bool = True, budget: int = 10_000) -> TestFunctionFamily:
    """Gaussian bumps over a width ladder plus dilated Hardy profiles."""
    c = tuple(np.zeros(grid.d) if center is None else np.asarray(center, float)[: grid.d])
    L, h = grid.L, grid.h
    anchors = tuple(Member("gauss", _shift(c, s), (L / 3,))
                    for s in [np.zeros(grid.d)] + [0.25 * L * e for e in np.eye(grid.d)])
    widths = np.geomspace(1.5 * h, L / 4, n_widths)
    members = []
    for w in widths:
        members.append(Member("gauss", c, (float(w),)))
        if offsets:
            for f in (0.5, 1.0):
                for e in np.eye(grid.d):
                    members.append(Member("gauss", _shift(c, f * w * e), (float(w),)))
    if hardy and grid.d >= 3:
        for r0 in (2 * h, 3 * h, 4 * h):
            for R in (L / 4, L / 2, 0.75 * L):
                if R > 2 * r0:
                    members.append(Member("hardy", c, (float(r0), float(R))))
    return TestFunctionFamily(anchors, tuple(members), budget)


def _shift(c, s) -> tuple:
    return tuple(float(a + b) for a, b in zip(c, s))


@lru_cache(maxsize=64)
def _member_norms(grid: Grid, member: Member) -> tuple:
    """(||psi||_2^2, ||grad psi||_2^2) with the spectral gradient."""
    psi = member.evaluate(grid)
    F = grid.fft(psi)
    return grid.integrate(psi**2), spectral_quadratic(grid, F, odd_ksq(grid))


def odd_ksq(grid: Grid) -> np.ndarray:
    out = 0.0
    for k in grid.kvec:
        out = out + k**2
    return np.broadcast_to(out, grid.ksq.shape)


def _rfft_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.n // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return w


def spectral_quadratic(grid: Grid, F: np.ndarray, symbol) -> float:
    """sum_k symbol(k) |f_k|^2 in physical normalization, from an rfft."""
    w = _rfft_weights(grid)
    return float(np.sum(w * symbol * np.abs(F) ** 2) * grid.cell / grid.size)


def member_norms(grid: Grid, member: Member) -> tuple:
    return _member_norms(grid, member)
