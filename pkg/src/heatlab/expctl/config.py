"""Run configuration: flat ``key = value`` text with dotted section names.

Arrays are comma lists. Unknown keys are rejected except below ``drift.``,
where every key other than ``drift.name`` is a parameter of the built-in.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from heatlab.drift.examples import BUILTINS
from heatlab.evolution import CFL_LIMIT, MODES

PIPELINE_NAMES = ("none", "prop43", "steklov_mf", "bmo_trunc", "div_parts")
SUITES = ("envelope", "nash", "entropy", "spectral_gap", "nash_ratio")
# fixed order for the per-module seed streams
SEED_MODULES = ("field-core", "drift-classes", "regularize", "evolution", "nash-verify")


class ConfigError(ValueError):
    """A malformed or out-of-range configuration entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list:
    return [int(x) for x in text.split(",") if x.strip()]


def _strs(text: str) -> list:
    return [x.strip() for x in text.split(",") if x.strip()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


# key -> (attribute, parser, default)
SCHEMA = {
    "run.name": ("name", str, "run"),
    "run.seed": ("seed", int, 0),
    "grid.d": ("d", int, 3),
    "grid.n": ("n", _ints, [64]),
    "grid.L": ("L", float, 8.0),
    "diffusion.scale": ("diffusion", float, 1.0),
    "drift.name": ("drift", str, "none"),
    "regularize.pipeline": ("pipeline", str, "none"),
    "regularize.eps": ("eps", _floats, []),
    "regularize.lam": ("lam", float, 1.0),
    "classify.times": ("class_times", _floats, [0.0]),
    "classify.random_members": ("random_members", int, 0),
    "classify.kato": ("kato", _bool, False),
    "classify.kato_horizon": ("kato_horizon", float, 4.0),
    "kernel.s": ("s", float, 0.0),
    "kernel.source": ("source", _floats, [0.0, 0.0, 0.0]),
    "kernel.ladder": ("ladder", _floats, [0.05, 0.1, 0.2]),
    "kernel.direction": ("direction", str, "adjoint"),
    "kernel.mode": ("mode", str, "none"),
    "kernel.dt": ("dt", _opt_float, None),
    "kernel.blend": ("blend", float, 1.0),
    "verify.suite": ("suite", _strs, ["envelope", "nash", "entropy"]),
    "verify.beta": ("beta", float, 2.0),
    "verify.expect": ("expect", _floats, []),
    "verify.expect_tol": ("expect_tol", float, 0.03),
    "verify.c1_min": ("c1_min", float, 0.0),
    "verify.spread_max": ("spread_max", float, 0.5),
    "verify.refine_tol": ("refine_tol", float, 0.1),
    "verify.gap_tol": ("gap_tol", float, 0.02),
    "output.dir": ("out", str, "heatlab_out"),
}
_ATTR = {v[0]: k for k, v in SCHEMA.items()}


@dataclass
class RunConfig:
    name: str = "run"
    seed: int = 0
    d: int = 3
    n: list = field(default_factory=lambda: [64])
    L: float = 8.0
    diffusion: float = 1.0
    drift: str = "none"
    drift_params: dict = field(default_factory=dict)
    pipeline: str = "none"
    eps: list = field(default_factory=list)
    lam: float = 1.0
    class_times: list = field(default_factory=lambda: [0.0])
    random_members: int = 0
    kato: bool = False
    kato_horizon: float = 4.0
    s: float = 0.0
    source: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    ladder: list = field(default_factory=lambda: [0.05, 0.1, 0.2])
    direction: str = "adjoint"
    mode: str = "none"
    dt: float | None = None
    blend: float = 1.0
    suite: list = field(default_factory=lambda: ["envelope", "nash", "entropy"])
    beta: float = 2.0
    expect: list = field(default_factory=list)
    expect_tol: float = 0.03
    c1_min: float = 0.0
    spread_max: float = 0.5
    refine_tol: float = 0.1
    gap_tol: float = 0.02
    out: str = "heatlab_out"

    # text form

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        values, params, seen = {}, {}, set()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
            key, val = (x.strip() for x in line.split("=", 1))
            if key in seen:
                raise ConfigError(key, "given twice")
            seen.add(key)
            if key in SCHEMA:
                attr, parse, _ = SCHEMA[key]
                try:
                    values[attr] = parse(val)
                except ValueError as exc:
                    raise ConfigError(key, str(exc)) from None
            elif key.startswith("drift.") and key.count(".") == 1:
                params[key.split(".", 1)[1]] = val
            else:
                raise ConfigError(key, "unknown key")
        return cls(**values, drift_params=params)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(Path(path).read_text())

    def items(self, with_output: bool = True) -> list:
        """Canonical (key, text) pairs, sorted by key."""
        out = []
        for f in fields(self):
            if f.name == "drift_params":
                continue
            key = _ATTR[f.name]
            if key == "output.dir" and not with_output:
                continue
            out.append((key, _fmt(getattr(self, f.name))))
        out += [(f"drift.{k}", str(v)) for k, v in self.drift_params.items()]
        return sorted(out)

    def canonical(self, with_output: bool = False) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items(with_output))

    def to_text(self) -> str:
        return self.canonical(with_output=True)

    @property
    def hash(self) -> str:
        """sha256 of the canonical text (the output directory excluded)."""
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def drift_text(self) -> str:
        return " ".join([self.drift] + [f"{k}={v}" for k, v in sorted(self.drift_params.items())])

    def seeds(self) -> dict:
        """One independent generator seed per module, split from the run seed."""
        children = np.random.SeedSequence(self.seed).spawn(len(SEED_MODULES))
        return dict(zip(SEED_MODULES, children))

    def rng(self, module: str) -> np.random.Generator:
        return np.random.default_rng(self.seeds()[module])


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "auto"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class Diagnostic:
    key: str
    message: str

    def __str__(self):
        return f"{self.key}: {self.message}"


def speed_bound(cfg: RunConfig, h: float, t: float) -> float:
    """A priori bound on sup |b| for the built-in drifts (no sampling)."""
    p = {k: v for k, v in cfg.drift_params.items()}
    name = cfg.drift
    if name == "none":
        return 0.0
    if name == "constant":
        return float(np.linalg.norm(_floats(p.get("v", "0,0,0"))))
    if name == "hardy":
        # cell average of 1/|x| over the cell holding the singularity
        return 3.0 * float(p.get("kappa", 0.3)) / h
    if name == "mprime":
        # Newton's theorem: the ball field peaks at nu R / 3
        return float(p.get("nu", 0.2)) * float(p.get("radius", 1.0)) / 3
    if name == "kato_plane":
        e = float(p.get("eps", 0.25))
        return math.sqrt(2) * (h / 2) ** (e - 1) / e
    if name == "rotational_bmo":
        c, L = float(p.get("c", 0.3)), cfg.L
        return c * (2 / L + 10 * abs(math.log(0.9 * L)) / (0.4 * L))
    if name == "lps_demo":
        return max(t, 1e-12) ** (-float(p.get("power", 0.25)))
    return float("nan")


def validate(cfg: RunConfig) -> list:
    """Diagnostics for a parsed configuration; never runs numerics."""
    out = []

    def bad(key, msg):
        out.append(Diagnostic(key, msg))

    if cfg.d not in (1, 2, 3):
        bad("grid.d", "dimension must be 1, 2 or 3")
    if not cfg.n or any(k < 8 or k % 2 for k in cfg.n):
        bad("grid.n", "resolutions must be even and at least 8")
    if not cfg.L > 0:
        bad("grid.L", "half-width must be positive")
    if not cfg.diffusion > 0:
        bad("diffusion.scale", "diffusion must be positive")
    if cfg.drift not in BUILTINS:
        bad("drift.name", f"unknown drift {cfg.drift!r}; built-ins are {', '.join(BUILTINS)}")
    elif cfg.drift == "none" and cfg.drift_params:
        bad("drift", "the zero drift takes no parameters")
    for k, v in cfg.drift_params.items():
        if k in ("center", "v"):
            try:
                vals = _floats(v)
            except ValueError:
                bad(f"drift.{k}", "expected a comma list of numbers")
                continue
            if len(vals) != cfg.d:
                bad(f"drift.{k}", f"expected {cfg.d} components")
        else:
            try:
                x = float(v)
            except ValueError:
                bad(f"drift.{k}", "expected a number")
                continue
            if not math.isfinite(x):
                bad(f"drift.{k}", "must be finite")
            elif k in ("kappa", "nu", "radius", "c") and x < 0:
                bad(f"drift.{k}", "must be non-negative")
            elif k == "eps" and not 0 < x <= 1:
                bad("drift.eps", "must lie in (0, 1]")
    if cfg.drift in ("kato_plane", "rotational_bmo") and cfg.d < 2:
        bad("grid.d", f"{cfg.drift} needs d >= 2")
    if cfg.pipeline not in PIPELINE_NAMES:
        bad("regularize.pipeline", f"unknown pipeline {cfg.pipeline!r}")
    elif cfg.pipeline != "none" and not cfg.eps:
        bad("regularize.eps", "a regularization pipeline needs an eps ladder")
    if any(not 0 < e for e in cfg.eps):
        bad("regularize.eps", "eps values must be positive")
    if cfg.pipeline == "bmo_trunc" and cfg.drift != "rotational_bmo":
        bad("regularize.pipeline", "bmo_trunc needs the rotational_bmo drift")
    if not cfg.lam > 0:
        bad("regularize.lam", "lambda must be positive")
    if any(t < 0 for t in cfg.class_times) or not cfg.class_times:
        bad("classify.times", "times must be non-negative and non-empty")
    if cfg.random_members < 0:
        bad("classify.random_members", "must be non-negative")
    if len(cfg.source) != cfg.d:
        bad("kernel.source", f"expected {cfg.d} components")
    elif any(abs(x) >= cfg.L for x in cfg.source):
        bad("kernel.source", "source lies outside the torus")
    lad = cfg.ladder
    if len(lad) < 2 or any(b <= a for a, b in zip(lad, lad[1:])):
        bad("kernel.ladder", "need at least two increasing times")
    elif lad[0] <= cfg.s:
        bad("kernel.ladder", "ladder times must exceed kernel.s")
    if "envelope" in cfg.suite and len(lad) < 3:
        bad("kernel.ladder", "envelope fitting needs at least three times")
    if cfg.direction not in ("forward", "adjoint"):
        bad("kernel.direction", "must be forward or adjoint")
    if cfg.mode not in MODES:
        bad("kernel.mode", f"must be one of {', '.join(MODES)}")
    if not 0 <= cfg.blend <= 1:
        bad("kernel.blend", "must lie in [0, 1]")
    for s in cfg.suite:
        if s not in SUITES:
            bad("verify.suite", f"unknown check {s!r}")
    if cfg.expect and len(cfg.expect) != 4:
        bad("verify.expect", "expected four constants c1, c2, c3, c4")
    if not cfg.beta > 0:
        bad("verify.beta", "must be positive")
    if cfg.dt is not None:
        if not cfg.dt > 0:
            bad("kernel.dt", "must be positive")
        elif cfg.drift in BUILTINS and cfg.n and cfg.L > 0:
            h = 2 * cfg.L / max(cfg.n)
            v = speed_bound(cfg, h, cfg.s + cfg.dt)
            if math.isfinite(v) and cfg.dt * v / h > CFL_LIMIT:
                bad("kernel.dt", f"CFL number {cfg.dt * v / h:.3g} exceeds {CFL_LIMIT} "
                                 f"(a priori |b| <= {v:.3g}, h = {h:.3g})")
            if lad and lad[0] < cfg.s + 4 * cfg.dt:
                bad("kernel.dt", "first ladder time must be at least s + 4 dt")
    return out
