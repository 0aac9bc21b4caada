"""Pipeline orchestration: classify, regularize, evolve, verify.

Stages run in order. Output files are written by one writer; every CSV row
starts with the config hash and floats use 17 significant digits, so a
fixed config and seed reproduce the tables byte for byte.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
import traceback
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from heatlab.drift.estimators import (bmo_norm, formbound_div_estimate, mf_bound_estimate,
                                      multiplicative_bound_estimate, weak_formbound_estimate)
from heatlab.drift.examples import log_matrix, parse_drift
from heatlab.drift.families import Member, default_family
from heatlab.drift.kato import kato_norm
from heatlab.drift.spec import DriftSpec
from heatlab.evolution import heat_kernel_estimate
from heatlab.expctl.config import RunConfig, validate
from heatlab.field import DiffusionMatrix, Grid
from heatlab.nash import (calibrated_entropy_constant, gaussian_envelope_fit, nash_constant,
                          nash_entropy_moment, nash_G, nash_ratio, spectral_gap_check)
from heatlab.regularize import (approx_bmo, approx_div_parts, approx_mf, approx_weak_formbounded,
                                potential_parts)

STAGES = ("classify", "regularize", "evolve", "verify")
PRESERVE_TOL = 0.03
FEASIBLE_TOL = 1e-9


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class ValidationError(ValueError):
    def __init__(self, diagnostics):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = list(diagnostics)


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


@dataclass
class Check:
    name: str
    passed: bool
    value: float = float("nan")
    threshold: float = float("nan")
    detail: str = ""


class Table:
    def __init__(self, columns):
        self.columns = ["config_hash"] + list(columns)
        self.rows = []

    def add(self, h, *values):
        if len(values) + 1 != len(self.columns):
            raise ValueError("row length does not match the header")
        self.rows.append([h] + list(values))

    def text(self) -> str:
        lines = [",".join(self.columns)]
        lines += [",".join(fmt(v) for v in r) for r in self.rows]
        return "\n".join(lines) + "\n"


@dataclass
class RunResult:
    out: Path
    status: str
    checks: list
    manifest: dict
    error: str = ""

    @property
    def exit_code(self) -> int:
        if self.status == "error":
            return 2
        return 0 if all(c.passed for c in self.checks) else 1


@dataclass
class _Context:
    cfg: RunConfig
    out: Path
    hash: str
    drift: DriftSpec | None = None
    a: DiffusionMatrix | None = None
    families: dict = field(default_factory=dict)
    pre: dict = field(default_factory=dict)
    kernels: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    schedules: dict = field(default_factory=dict)

    def grid(self, n: int) -> Grid:
        return Grid(self.cfg.d, n, self.cfg.L)

    def family(self, grid: Grid):
        if grid not in self.families:
            fam = default_family(grid)
            k = self.cfg.random_members
            if k:
                rng = self.cfg.rng("drift-classes")
                cen = rng.uniform(-grid.L / 2, grid.L / 2, size=(k, grid.d))
                w = np.exp(rng.uniform(math.log(1.5 * grid.h), math.log(grid.L / 4), size=k))
                fam = fam.extend(Member("gauss", tuple(map(float, c)), (float(wi),)) for c, wi in zip(cen, w))
            self.families[grid] = fam
        return self.families[grid]

    def check(self, name, passed, value=float("nan"), threshold=float("nan"), detail=""):
        self.checks.append(Check(name, bool(passed), float(value), float(threshold), detail))


# class estimates

def _estimate_rows(ctx, tab, stage, label, eps, grid, b, times, parts=None):
    """Class estimates of one drift; returns {quantity: worst value over times}."""
    fam = ctx.family(grid)
    cfg = ctx.cfg
    worst = {}

    def put(q, t, v):
        tab.add(ctx.hash, stage, label, eps, grid.n, t, q, v)
        worst[q] = max(worst.get(q, -np.inf), v)

    for t in times:
        dm, gm = mf_bound_estimate(b, t, fam, grid)
        put("delta_mf", t, dm)
        put("g_mf", t, gm)
        d1, g1 = multiplicative_bound_estimate(b, t, fam, grid)
        put("delta_m", t, d1)
        put("g_m", t, g1)
        put("delta_wfb", t, weak_formbound_estimate(b, t, cfg.lam, fam, grid))
        Vp, Vm = parts if parts is not None else potential_parts(b)
        for sign, V in (("plus", Vp), ("minus", Vm)):
            if np.any(V.sample(grid, t)):
                nu, hh = formbound_div_estimate(V, t, fam, grid)
                put(f"nu_{sign}", t, nu)
                put(f"h_{sign}", t, hh)
    if cfg.kato:
        Vp, Vm = parts if parts is not None else potential_parts(b)
        for sign, V in (("plus", Vp), ("minus", Vm)):
            if any(np.any(V.sample(grid, t)) for t in times):
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    k = kato_norm(V, cfg.kato_horizon, grid)
                put(f"kato_{sign}", cfg.kato_horizon, k.value)
    g_mf = [r[-1] for r in tab.rows if r[1] == stage and r[2] == label and r[3] == eps and r[6] == "g_mf"]
    if len(times) > 1:
        worst["g_mf_l2"] = float(np.sqrt(np.trapezoid(np.square(g_mf), times)))
    return worst


def stage_classify(ctx):
    cfg = ctx.cfg
    ctx.drift = parse_drift(cfg.drift_text())
    ctx.a = DiffusionMatrix.identity(cfg.d, cfg.diffusion)
    tab = Table(["stage", "field", "eps", "n", "t", "quantity", "value"])
    ctx.tables["class_estimates.csv"] = tab
    grid = ctx.grid(cfg.n[0])
    ctx.pre = _estimate_rows(ctx, tab, "classify", cfg.drift, 0.0, grid, ctx.drift, cfg.class_times)
    if cfg.pipeline == "bmo_trunc":
        B = log_matrix(grid, float(cfg.drift_params.get("c", 0.3)))
        ctx.pre["bmo"] = bmo_norm(B[0, 1], grid)
        tab.add(ctx.hash, "classify", cfg.drift, 0.0, grid.n, 0.0, "bmo", ctx.pre["bmo"])


def _regularized(ctx, grid, eps):
    """Drift (and divergence parts) after the configured pipeline at one eps."""
    cfg, b = ctx.cfg, ctx.drift
    if cfg.pipeline == "steklov_mf":
        return approx_mf(b, eps), None
    if cfg.pipeline == "prop43":
        key = (grid.n, eps)
        if key not in ctx.schedules:
            fam = ctx.family(grid)
            sob = ctx.schedules.get("sobolev_c")
            be, sched = approx_weak_formbounded(b, eps, cfg.lam, fam, grid, cfg.class_times,
                                                delta=ctx.pre.get("delta_wfb"), sobolev_c=sob)
            ctx.schedules[key] = (be, sched)
            ctx.schedules.setdefault("sobolev_c", sched.sobolev_c)
        return ctx.schedules[key][0], None
    if cfg.pipeline == "bmo_trunc":
        B = log_matrix(grid, float(cfg.drift_params.get("c", 0.3)))
        Be, be, c = approx_bmo(B, eps, grid)
        spec = DriftSpec.from_samples(grid, [0.0], be[None], name=f"bmo_trunc[{eps:g}]{b.name}",
                                      div_rule=lambda g, t: np.zeros(g.shape))
        return spec, {"B": Be, "c": c}
    if cfg.pipeline == "div_parts":
        Vp, Vm = potential_parts(b)
        return b, approx_div_parts(Vp, Vm, eps)
    return b, None


def stage_regularize(ctx):
    cfg = ctx.cfg
    if cfg.pipeline == "none":
        return
    tab = ctx.tables["class_estimates.csv"]
    grid = ctx.grid(cfg.n[0])
    watch = {"prop43": ["delta_wfb"], "steklov_mf": ["delta_mf", "g_mf_l2"],
             "bmo_trunc": ["bmo"], "div_parts": ["nu_plus", "nu_minus", "kato_plus", "kato_minus"]}[cfg.pipeline]
    for eps in cfg.eps:
        be, extra = _regularized(ctx, grid, eps)
        label = f"{cfg.pipeline}"
        parts = extra if cfg.pipeline == "div_parts" else None
        post = _estimate_rows(ctx, tab, "regularize", label, eps, grid, be, cfg.class_times, parts)
        if cfg.pipeline == "bmo_trunc":
            post["bmo"] = bmo_norm(extra["B"][0, 1], grid)
            tab.add(ctx.hash, "regularize", label, eps, grid.n, 0.0, "bmo", post["bmo"])
            tab.add(ctx.hash, "regularize", label, eps, grid.n, 0.0, "bmo_c", extra["c"])
        if cfg.pipeline == "prop43":
            sched = ctx.schedules[(grid.n, eps)][1]
            for q in ("delta", "delta_eps", "c_eps", "window", "sobolev_c"):
                tab.add(ctx.hash, "regularize", label, eps, grid.n, 0.0, f"schedule_{q}", getattr(sched, q))
        for q in watch:
            if q in ctx.pre and q in post:
                lim = ctx.pre[q] * (1 + PRESERVE_TOL) + 1e-12
                ctx.check(f"preserve:{cfg.pipeline}:{q}:eps={eps:g}", post[q] <= lim, post[q], lim)


def _kernel_drift(ctx, grid):
    cfg = ctx.cfg
    if cfg.pipeline in ("none", "div_parts") or not cfg.eps:
        return ctx.drift
    return _regularized(ctx, grid, cfg.eps[-1])[0]


def stage_evolve(ctx):
    cfg = ctx.cfg
    for n in cfg.n:
        grid = ctx.grid(n)
        b = _kernel_drift(ctx, grid)
        if cfg.drift == "none":
            b = None
        K = heat_kernel_estimate(grid, ctx.a, b, cfg.s, tuple(cfg.source), cfg.ladder, dt=cfg.dt,
                                 direction=cfg.direction, mode=cfg.mode, blend=cfg.blend)
        ctx.kernels[n] = K
        path = ctx.out / f"kernel_n{n}.bin"
        K.dump(path)
        # stamp the hash into the sidecar as well
        side = Path(str(path) + ".json")
        header = json.loads(side.read_text())
        header["config_hash"] = ctx.hash
        side.write_text(json.dumps(header, indent=2, sort_keys=True))
        ctx.files += [path, side]
        ctx.notes.append(f"kernel n={n}: dt={K.dt:.6g}, max mass defect {np.max(np.abs(K.mass_defect)):.3g}")


def _verify_envelope(ctx):
    cfg = ctx.cfg
    tab = Table(["n", "c1", "c2", "c3", "c4", "upper_slack", "lower_slack", "n_probes", "direction"])
    ctx.tables["envelope_fits.csv"] = tab
    for n, K in ctx.kernels.items():
        try:
            fit = gaussian_envelope_fit(K)
        except ValueError as exc:
            ctx.check(f"envelope:n={n}:fit", False, detail=str(exc))
            continue
        ctx.fits[n] = fit
        tab.add(ctx.hash, n, fit.c1, fit.c2, fit.c3, fit.c4, fit.upper_slack, fit.lower_slack,
                fit.n_probes, K.direction)
        slack = min(fit.upper_slack, fit.lower_slack)
        ctx.check(f"envelope:n={n}:feasible", slack >= -FEASIBLE_TOL, slack, -FEASIBLE_TOL)
        ctx.check(f"envelope:n={n}:c1_min", fit.c1 >= cfg.c1_min, fit.c1, cfg.c1_min)
        if cfg.expect:
            got = np.array([fit.c1, fit.c2, fit.c3, fit.c4])
            err = float(np.max(np.abs(got / np.asarray(cfg.expect) - 1)))
            ctx.check(f"envelope:n={n}:expect", err <= cfg.expect_tol, err, cfg.expect_tol)
    if len(ctx.fits) > 1:
        rows = np.array([[f.c1, f.c2, f.c3, f.c4] for f in ctx.fits.values()])
        var = float(np.max(np.abs(rows / rows[0] - 1)))
        ctx.check("envelope:refinement", var <= cfg.refine_tol, var, cfg.refine_tol,
                  "n = " + ",".join(str(n) for n in ctx.fits))


def _verify_slices(ctx):
    cfg = ctx.cfg
    suite = set(cfg.suite)
    tab = Table(["n", "tau", "beta", "G", "G_shifted", "G_eps1", "G_eps2", "G_eps3",
                 "Q", "M", "exp_Q_over_d", "C_M", "entropy_pass", "degenerate"])
    ctx.tables["nash_trace.csv"] = tab
    C = calibrated_entropy_constant(cfg.d)
    nan = float("nan")
    for n, K in ctx.kernels.items():
        grid = K.grid
        z = np.asarray(K.source[1])
        shifted = []
        fit = ctx.fits.get(n)
        beta = max(cfg.beta, 2 * fit.c4) if fit is not None else cfg.beta
        for tau, U in zip(K.lags(), K.slices):
            Gv, Ge = nan, [nan] * 3
            if "nash" in suite:
                Gv, Ge = nash_G(grid, np.maximum(U, 0.0), beta, z, float(tau), z=z,
                                c4=fit.c4 if fit is not None else None)
                shifted.append(Gv + grid.d / 2 * math.log(tau))
            em = (nash_entropy_moment(grid, U, z, C) if "entropy" in suite else None)
            tab.add(ctx.hash, n, tau, beta, Gv, shifted[-1] if shifted else nan, *Ge,
                    em.Q if em else nan, em.M if em else nan, em.lhs if em else nan,
                    em.rhs if em else nan, em.passed if em else True, em.degenerate if em else False)
            if em is not None:
                ctx.check(f"entropy:n={n}:tau={tau:.6g}", em.passed, em.lhs / em.rhs, 1.0)
        if shifted:
            spread = max(shifted) - min(shifted)
            ctx.check(f"nash_G:n={n}:spread", spread <= cfg.spread_max, spread, cfg.spread_max,
                      f"observed constant {-min(shifted):.6g}")


def _verify_spectral_gap(ctx):
    cfg = ctx.cfg
    rng = cfg.rng("nash-verify")
    n = cfg.n[0]
    grid = ctx.grid(n)
    X = grid.coords
    fs = []
    for _ in range(4):
        k = rng.integers(-3, 4, size=(3, grid.d))
        ph = rng.uniform(0, 2 * np.pi, size=3)
        amp = rng.normal(size=3)
        fs.append(sum(a * np.cos(sum(ki * np.pi * x / grid.L for ki, x in zip(kk, X)) + p)
                      for a, kk, p in zip(amp, k, ph)))
    center = np.asarray(cfg.source)
    for tau in np.asarray(cfg.ladder) - cfg.s:
        bt = cfg.beta * tau
        for j, f in enumerate(fs):
            lhs, rhs = spectral_gap_check(grid, bt, f, center)
            ok = lhs >= rhs * (1 - cfg.gap_tol)
            ctx.check(f"spectral_gap:beta_tau={bt:.6g}:f{j}", ok, lhs / rhs if rhs > 0 else np.inf,
                      1 - cfg.gap_tol)


def _verify_nash_ratio(ctx):
    for n, K in ctx.kernels.items():
        grid = K.grid
        C = nash_constant(grid)
        worst = min(nash_ratio(grid, np.maximum(U, 0.0)) for U in K.slices)
        ctx.check(f"nash_ratio:n={n}", worst >= C * (1 - 1e-12), worst, C)


def stage_verify(ctx):
    suite = set(ctx.cfg.suite)
    if "envelope" in suite or "nash" in suite:
        _verify_envelope(ctx)
    if suite & {"nash", "entropy"}:
        _verify_slices(ctx)
    if "spectral_gap" in suite:
        _verify_spectral_gap(ctx)
    if "nash_ratio" in suite:
        _verify_nash_ratio(ctx)


STAGE_FUNCS = {"classify": stage_classify, "regularize": stage_regularize,
               "evolve": stage_evolve, "verify": stage_verify}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _flush(ctx):
    for name, tab in ctx.tables.items():
        p = ctx.out / name
        p.write_text(tab.text())
        if p not in ctx.files:
            ctx.files.append(p)
    checks = Table(["check", "passed", "value", "threshold", "detail"])
    for c in ctx.checks:
        checks.add(ctx.hash, c.name, c.passed, c.value, c.threshold, c.detail.replace(",", ";"))
    p = ctx.out / "checks.csv"
    p.write_text(checks.text())
    if p not in ctx.files:
        ctx.files.append(p)


def _manifest(ctx, status, stages, error=None, timings=None, extra=None) -> dict:
    m = {
        "config_hash": ctx.hash,
        "config": ctx.cfg.canonical(),
        "run": ctx.cfg.name,
        "seed": ctx.cfg.seed,
        "status": status,
        "stages": stages,
        "checks": {"total": len(ctx.checks), "failed": [c.name for c in ctx.checks if not c.passed]},
        "notes": ctx.notes,
        "files": [{"path": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size}
                  for p in sorted(ctx.files, key=lambda q: q.name)],
        "timings": timings or {},
    }
    if error:
        m["error"] = error
    m.update(extra or {})
    (ctx.out / "manifest.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
    return m


def run(cfg: RunConfig, out=None) -> RunResult:
    """Execute every stage of a validated configuration.

    A stage error stops the run; the manifest then names the stage and lists
    the files written so far.
    """
    diags = validate(cfg)
    if diags:
        raise ValidationError(diags)
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Context(cfg, out, cfg.hash)
    done, timings = [], {}
    for name in STAGES:
        t0 = time.perf_counter()
        try:
            STAGE_FUNCS[name](ctx)
        except Exception as exc:  # noqa: BLE001  every failure is reported with its stage
            err = StageError(name, exc)
            _flush(ctx)
            man = _manifest(ctx, "error", {"completed": done, "failed": name}, str(err), timings,
                            {"traceback": traceback.format_exc()})
            return RunResult(out, "error", ctx.checks, man, str(err))
        timings[name] = time.perf_counter() - t0
        done.append(name)
    _flush(ctx)
    status = "pass" if all(c.passed for c in ctx.checks) else "fail"
    man = _manifest(ctx, status, {"completed": done}, None, timings)
    return RunResult(out, status, ctx.checks, man)
