"""Built-in run configurations."""
from __future__ import annotations

from heatlab.expctl.config import RunConfig

_PRESETS = {
    "free": ("zero drift, free heat kernel calibration", """
run.name = free
grid.n = 64
grid.L = 8
drift.name = none
kernel.ladder = 0.05,0.1,0.2
verify.suite = envelope,nash,entropy,spectral_gap,nash_ratio
verify.expect = 1,1,1,1
verify.expect_tol = 0.03
"""),
    "constant_drift": ("constant drift, exact Fourier phase transport", """
run.name = constant_drift
grid.n = 64
grid.L = 8
drift.name = constant
drift.v = 1,0,0
kernel.ladder = 0.05,0.1,0.2
verify.suite = envelope,nash,entropy
"""),
    "hardy": ("Hardy drift kappa x/|x|^2 regularized by heat smoothing", """
run.name = hardy
grid.n = 48,96
grid.L = 8
drift.name = hardy
drift.kappa = 0.3
regularize.pipeline = steklov_mf
regularize.eps = 0.2,0.1,0.05
kernel.ladder = 0.1,0.2,0.4
verify.suite = envelope,nash,entropy
verify.c1_min = 0.05
verify.refine_tol = 0.1
"""),
    "mprime": ("gradient of the Newtonian potential of a ball indicator", """
run.name = mprime
grid.n = 48
grid.L = 8
drift.name = mprime
drift.nu = 0.2
drift.radius = 1
classify.kato = true
classify.kato_horizon = 4
kernel.ladder = 0.1,0.2,0.4
verify.suite = envelope,nash,entropy
"""),
    "kato_plane": ("Kato-class field singular on two planes, not locally square integrable", """
run.name = kato_plane
grid.n = 40
grid.L = 2
drift.name = kato_plane
drift.eps = 0.25
drift.radius = 1
regularize.pipeline = div_parts
regularize.eps = 0.05
classify.kato = true
classify.kato_horizon = 2
kernel.ladder = 0.05,0.1,0.2
kernel.mode = none
verify.suite = entropy
"""),
    "rotational_bmo": ("divergence-free field from a skew log matrix, clipped and smoothed", """
run.name = rotational_bmo
grid.n = 64
grid.L = 8
drift.name = rotational_bmo
drift.c = 0.3
regularize.pipeline = bmo_trunc
regularize.eps = 0.1,0.03
kernel.ladder = 0.1,0.2,0.4
verify.suite = envelope,nash,entropy
"""),
    "lps_demo": ("time-singular drift t^(-1/4) phi(x) e1", """
run.name = lps_demo
grid.n = 32
grid.L = 8
drift.name = lps_demo
drift.power = 0.25
drift.radius = 1
regularize.pipeline = steklov_mf
regularize.eps = 0.1
classify.times = 0.25,0.5,1
kernel.s = 0
kernel.ladder = 0.1,0.2,0.4
verify.suite = envelope,entropy
"""),
}


def list_presets() -> dict:
    """Catalog name -> one-line description."""
    return {k: v[0] for k, v in _PRESETS.items()}


def preset_text(name: str) -> str:
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(_PRESETS)}")
    return _PRESETS[name][1].lstrip()


def preset(name: str) -> RunConfig:
    return RunConfig.parse(preset_text(name))
