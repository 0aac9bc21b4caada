"""Drift and potential containers plus the flat binary exchange format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from heatlab.field import Grid

Rule = Callable[[Grid, float], np.ndarray]


@dataclass(frozen=True)
class DriftSpec:
    """A drift b(t, x) given by a sampling rule on a grid.

    ``rule(grid, t)`` returns an array of shape (d, *grid.shape). Optional
    rules give the divergence, the pair ((div b)_+, (div b)_-) and |b|.
    """

    name: str
    rule: Rule
    T: float = 1.0
    div_rule: Rule | None = None
    split_rule: Callable | None = None
    magnitude_rule: Rule | None = None
    time_dependent: bool = False
    singular: bool = False
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def sample(self, grid: Grid, t: float = 0.0) -> np.ndarray:
        return np.asarray(self.rule(grid, t), float)

    def magnitude(self, grid: Grid, t: float = 0.0) -> np.ndarray:
        if self.magnitude_rule is not None:
            return np.asarray(self.magnitude_rule(grid, t), float)
        return np.sqrt(np.sum(self.sample(grid, t) ** 2, axis=0))

    def divergence(self, grid: Grid, t: float = 0.0) -> np.ndarray:
        if self.div_rule is not None:
            return np.asarray(self.div_rule(grid, t), float)
        return grid.div(self.sample(grid, t))

    def div_parts(self, grid: Grid, t: float = 0.0) -> tuple:
        if self.split_rule is not None:
            p, m = self.split_rule(grid, t)
            return np.asarray(p, float), np.asarray(m, float)
        dv = self.divergence(grid, t)
        return np.maximum(dv, 0.0), np.maximum(-dv, 0.0)

    def split_mismatch(self, grid: Grid, t: float = 0.0) -> float:
        """Relative L1 gap between (div b)_+ - (div b)_- and the numeric divergence."""
        p, m = self.div_parts(grid, t)
        if np.min(p) < 0 or np.min(m) < 0:
            raise ValueError("divergence parts must be non-negative")
        num = grid.div(self.sample(grid, t))
        scale = max(grid.norm(num, 1), grid.norm(p - m, 1), 1e-300)
        return grid.norm(p - m - num, 1) / scale

    def scaled(self, c: float) -> "DriftSpec":
        c = float(c)

        def rule(g, t):
            return c * self.sample(g, t)

        def div_rule(g, t):
            return c * self.divergence(g, t)

        def mag(g, t):
            return abs(c) * self.magnitude(g, t)

        split = None
        if self.split_rule is not None and c >= 0:
            def split(g, t):
                p, m = self.div_parts(g, t)
                return c * p, c * m
        return replace(self, name=f"{c:g}*{self.name}", rule=rule,
                       div_rule=div_rule if self.div_rule is not None else None,
                       split_rule=split, magnitude_rule=mag if self.magnitude_rule else None,
                       params={**self.params, "scale": c})

    @classmethod
    def from_samples(cls, grid: Grid, times, values, name: str = "sampled", **kw) -> "DriftSpec":
        """Sampled drift, piecewise linear in time, values (nt, d, *shape)."""
        times = np.atleast_1d(np.asarray(times, float))
        values = np.asarray(values, float)
        if values.shape[1:] != (grid.d,) + grid.shape or values.shape[0] != times.size:
            raise ValueError("samples must have shape (nt, d, *grid.shape)")
        rule = _time_interp(grid, times, values)
        return cls(name=name, rule=rule, T=float(times[-1]) if times.size > 1 else kw.pop("T", 1.0),
                   time_dependent=times.size > 1, **kw)


@dataclass(frozen=True)
class PotentialSpec:
    """Non-negative (usually) potential V(t, x).

    ``breaks`` lists the times where V may change; between breaks V is
    treated as constant, sampled at the midpoint. An empty tuple means time
    independent.
    """

    name: str
    rule: Rule
    breaks: tuple = ()
    params: dict = field(default_factory=dict)

    @property
    def time_dependent(self) -> bool:
        return len(self.breaks) > 0

    def sample(self, grid: Grid, t: float = 0.0) -> np.ndarray:
        return np.asarray(self.rule(grid, t), float)

    def slices(self, T: float) -> list:
        """(start, end, sample time) triples covering [0, T]."""
        cuts = [0.0] + [b for b in self.breaks if 0 < b < T] + [T]
        return [(a, b, 0.5 * (a + b)) for a, b in zip(cuts[:-1], cuts[1:])]

    def scaled(self, c: float) -> "PotentialSpec":
        return replace(self, name=f"{c:g}*{self.name}",
                       rule=lambda g, t: c * self.sample(g, t))

    def __add__(self, other: "PotentialSpec") -> "PotentialSpec":
        br = tuple(sorted(set(self.breaks) | set(other.breaks)))
        return PotentialSpec(f"{self.name}+{other.name}",
                             lambda g, t: self.sample(g, t) + other.sample(g, t), br)

    @classmethod
    def from_array(cls, values: np.ndarray, name: str = "sampled") -> "PotentialSpec":
        v = np.asarray(values, float)
        return cls(name, lambda g, t: v)

    @classmethod
    def from_samples(cls, times, values, name: str = "sampled") -> "PotentialSpec":
        """Piecewise constant in time: values[j] holds on [times[j], times[j+1])."""
        times = np.asarray(times, float)
        values = np.asarray(values, float)

        def rule(g, t):
            j = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(values) - 1))
            return values[j]
        return cls(name, rule, tuple(times[1:]))


def _time_interp(grid, times, values):
    def rule(g, t):
        if g != grid:
            raise ValueError("sampled drift evaluated on a foreign grid")
        if times.size == 1:
            return values[0]
        if t <= times[0]:
            return values[0]
        if t >= times[-1]:
            return values[-1]
        j = int(np.searchsorted(times, t) - 1)
        w = (t - times[j]) / (times[j + 1] - times[j])
        return (1 - w) * values[j] + w * values[j + 1]
    return rule


# flat binary + sidecar

def write_binary(path, values: np.ndarray, extra: dict | None = None) -> Path:
    """Write float64 row-major samples plus a JSON sidecar ``<path>.json``."""
    path = Path(path)
    arr = np.ascontiguousarray(values, dtype="<f8")
    path.write_bytes(arr.tobytes(order="C"))
    header = {"dims": list(arr.shape), "dtype": "float64", "order": "row-major",
              "layout": "time-major", "endian": "little"}
    if extra:
        header.update(extra)
    Path(str(path) + ".json").write_text(json.dumps(header, indent=2, sort_keys=True))
    return path


def read_binary(path) -> tuple:
    path = Path(path)
    header = json.loads(Path(str(path) + ".json").read_text())
    if header.get("dtype") != "float64" or header.get("order") != "row-major":
        raise ValueError("only row-major float64 dumps are supported")
    arr = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(header["dims"])
    return arr.copy(), header


def load_sampled_drift(path, grid: Grid) -> DriftSpec:
    arr, header = read_binary(path)
    times = header.get("times", [0.0] * arr.shape[0])
    return DriftSpec.from_samples(grid, times, arr, name=Path(path).stem)
