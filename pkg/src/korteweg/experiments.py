"""Experiment runners behind the CLI subcommands, and their artifact writers."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, apply_overrides, validate_config
from .fourier import SpectralField, TorusGrid, make_grid
from .gevrey import (
    GevreySpec,
    RadiusError,
    heat_composition_bound,
    heat_composition_check,
    multiplied_trajectory,
    track_radius,
)
from .integrator import IntegratorConfig, residual_check, simulate
from .linear import (
    FluidState,
    LinearPropagator,
    Regime,
    classify,
    classify_regime,
    effective_alpha,
    kernel_constant,
    slowest_rate,
)
from .littlewood_paley import (
    DyadicFilterBank,
    build_filter_bank,
    epq_norm_states,
    epq_specs,
    hybrid_norm,
    norm_row,
)
from .params import FluidParams, discriminant
from .probes import InadmissibleParameters, probe_inequality

log = logging.getLogger(__name__)

SCHEMA_LINE = "# schema=1"


# --- building blocks -----------------------------------------------------------------

def params_from_config(section: dict) -> FluidParams:
    base = FluidParams.constant(
        mu_bar=float(section["mu_bar"]),
        lambda_bar=float(section["lambda_bar"]),
        kappa_bar=float(section["kappa_bar"]),
        rho_star=float(section["rho_star"]),
        pressure_curvature=float(section["pressure_curvature"]),
        p0=float(section["p0"]),
    )
    custom = {k: section[k] for k in ("pressure", "shear", "bulk", "capillarity") if section[k] is not None}
    if not custom:
        return base
    return FluidParams(
        rho_star=base.rho_star,
        pressure=custom.get("pressure", base.pressure),
        shear=custom.get("shear", base.shear),
        bulk=custom.get("bulk", base.bulk),
        capillarity=custom.get("capillarity", base.capillarity),
    )


def grid_from_config(section: dict) -> TorusGrid:
    return make_grid(int(section["dim"]), int(section["n"]), float(section["period"]))


def _masked(grid: TorusGrid, values: np.ndarray) -> SpectralField:
    f = SpectralField.from_physical(grid, values)
    c = f.coeffs * grid.dealias_mask
    c[(Ellipsis,) + (0,) * grid.dim] = 0.0
    return SpectralField(grid, c)


def _random_field(grid: TorusGrid, rng: np.random.Generator, decay: float, amplitude: float,
                  components: Optional[int]) -> SpectralField:
    """Random-phase field with modulus |k|^-decay in the dealiased band; components=None is scalar."""
    out = []
    kn = np.sqrt(np.sum(grid.k_int.astype(float) ** 2, axis=0))
    env = np.where(kn > 0, kn, 1.0) ** (-decay) * grid.dealias_mask * (kn > 0)
    for _ in range(components or 1):
        raw = np.fft.fftn(rng.standard_normal(grid.shape))
        c = raw / np.where(np.abs(raw) > 0, np.abs(raw), 1.0) * env
        c[..., grid.nyquist] = 0.0
        f = SpectralField(grid, c)
        c = c * (amplitude / float(np.max(np.abs(f.to_physical()))))
        out.append(c)
    return SpectralField(grid, out[0] if components is None else np.stack(out))


def initial_state(grid: TorusGrid, section: dict, seed: int) -> FluidState:
    kind = section["kind"]
    amp = float(section["amplitude"])
    if kind == "zero" or amp == 0.0:
        return FluidState.zeros(grid)
    if kind in ("random", "white"):
        rng = np.random.default_rng(seed)
        decay = 0.0 if kind == "white" else float(section["decay"])
        return FluidState(_random_field(grid, rng, decay, amp, None),
                          _random_field(grid, rng, decay, amp, grid.dim))
    x = grid.points()
    w = float(section["width"])
    centre = grid.period / 2.0

    def bump(shift: float) -> np.ndarray:
        r2 = sum((x[i] - centre - shift * (i + 1)) ** 2 for i in range(grid.dim))
        return np.exp(-r2 / w**2)

    a = _masked(grid, amp * bump(0.0))
    m = _masked(grid, np.stack([amp * bump(0.5 * w * (k + 1)) for k in range(grid.dim)]))
    return FluidState(a, m)


def integrator_from_config(section: dict, nonlinear: Optional[bool] = None) -> IntegratorConfig:
    return IntegratorConfig(
        scheme=section["scheme"],
        dt=float(section["dt"]),
        t_end=float(section["t_end"]),
        adapt=bool(section["adapt"]),
        tol=float(section["tol"]),
        snapshot_stride=int(section["snapshot_stride"]),
        nonlinear=bool(section["nonlinear"]) if nonlinear is None else nonlinear,
    )


def linear_trajectory(state: FluidState, params: FluidParams, times: np.ndarray,
                      propagator: Optional[LinearPropagator] = None) -> list[FluidState]:
    """Exact linear evolution, each snapshot propagated directly from the data."""
    prop = propagator or LinearPropagator(state.grid, params)
    u0 = state.stacked()
    return [FluidState.from_stacked(state.grid, prop.apply(u0, float(t))) for t in times]


def snapshot_times(it: IntegratorConfig) -> np.ndarray:
    n = int(round(it.t_end / it.dt))
    steps = np.arange(0, n + 1, it.snapshot_stride)
    if steps[-1] != n:
        steps = np.append(steps, n)
    return steps * it.dt


def grad_a(state: FluidState) -> SpectralField:
    g = state.grid
    return SpectralField(g, 1j * g.xi * state.a.coeffs)


def sup_hybrid(state: FluidState, bank: DyadicFilterBank, p: float, q: float,
               j0: Optional[int] = None) -> float:
    """Hybrid norm of (grad a, m) in the sup-in-time space of the solution norm."""
    sup_part, _ = epq_specs(bank.grid.dim, p, q, j0)
    return hybrid_norm(grad_a(state), sup_part, bank) + hybrid_norm(state.m, sup_part, bank)


def decoupling_error(states: list[FluidState], times: np.ndarray, params: FluidParams) -> float:
    """max over alpha branches and snapshots of |w(t) - exp(-(nu - alpha)|xi|^2 t) w(0)| / max|w(0)|."""
    from .nonlinear import effective_velocity

    worst = 0.0
    for alpha, rest in effective_alpha(params):
        w0 = effective_velocity(states[0], alpha).coeffs
        scale = float(np.max(np.abs(w0))) or 1.0
        for s, t in zip(states, times):
            w = effective_velocity(s, alpha).coeffs
            pred = np.exp(-rest * s.grid.xi_sq * t) * w0
            worst = max(worst, float(np.max(np.abs(w - pred))) / scale)
    return worst


# --- artifact writing ------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        v = float(v)
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    if isinstance(v, (np.floating,)):
        return _fmt(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = path.read_text().splitlines()
    if not lines or lines[0] != SCHEMA_LINE:
        raise ValueError(f"{path} lacks the {SCHEMA_LINE!r} header")
    rows = list(csv.reader(lines[1:]))
    return rows[0], rows[1:]


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_snapshots(out: Path, times, states: list[FluidState]) -> list[Path]:
    d = out / "snapshots"
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, s in enumerate(states):
        p = d / f"snap_{k:04d}.npy"
        np.save(p, s.stacked())
        paths.append(p)
    paths.append(write_csv(d / "times.csv", ["index", "time"], [[k, float(t)] for k, t in enumerate(times)]))
    return paths


# --- experiments -----------------------------------------------------------------------

class RunContext:
    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.files: list[Path] = []
        self.results: dict = {}
        self.guard_events: list[dict] = []

    def add(self, *paths: Path):
        self.files.extend(paths)


def run_classify(ctx: RunContext):
    c = ctx.cfg["classify"]
    n = int(c["points"])
    rows = []
    counts = {r.value: 0 for r in Regime}
    for nu in np.linspace(float(c["nu_min"]), float(c["nu_max"]), n):
        for ka in np.linspace(float(c["kappa_min"]), float(c["kappa_max"]), n):
            reg = classify_regime(float(nu), float(ka))
            counts[reg.value] += 1
            rows.append([float(nu), float(ka), float(discriminant(nu, ka)), reg.value])
    ctx.add(write_csv(ctx.out / "regimes.csv", ["nu_bar", "kappa_bar", "discriminant", "regime"], rows))
    ctx.results["regime_counts"] = counts


def _setup(ctx: RunContext):
    cfg = ctx.cfg
    grid = grid_from_config(cfg["grid"])
    params = params_from_config(cfg["params"])
    state = initial_state(grid, cfg["initial"], cfg.seed)
    bank = build_filter_bank(grid, int(cfg["indices"]["j0"]))
    return grid, params, state, bank


def _norm_rows(times, states, bank, p, q, j0):
    rows = []
    for t, s in zip(times, states):
        rows.append([float(t), float(np.max(np.abs(s.a.to_physical()))),
                     float(np.max(np.abs(s.m.to_physical()))), sup_hybrid(s, bank, p, q, j0)])
    return rows


def _epq(times, states, bank, p, q, j0) -> float:
    if len(times) < 2:
        return math.nan
    return epq_norm_states(times, states, p, q, bank, None, j0)


def run_linear_evolve(ctx: RunContext):
    grid, params, state, bank = _setup(ctx)
    it = integrator_from_config(ctx.cfg["integrator"], nonlinear=False)
    times = snapshot_times(it)
    states = linear_trajectory(state, params, times)
    p, q, j0 = _indices(ctx)
    ctx.add(write_csv(ctx.out / "norms.csv", ["time", "a_linf", "m_linf", "sup_hybrid"],
                      _norm_rows(times, states, bank, p, q, j0)))
    ctx.results["epq_norm"] = _epq(times, states, bank, p, q, j0)
    ctx.results["regime"] = classify(params).value
    if classify(params) is not Regime.COMPLEX and float(np.max(np.abs(state.stacked()))) > 0:
        ctx.results["decoupling_error"] = decoupling_error(states, times, params)
    _maybe_snapshots(ctx, times, states)


def _indices(ctx):
    ix = ctx.cfg["indices"]
    return float(ix["p"]), float(ix["q"]), int(ix["j0"])


def _maybe_snapshots(ctx, times, states):
    if ctx.cfg["output"]["snapshots"]:
        ctx.add(*write_snapshots(ctx.out, times, states))


def _nonlinear_trajectory(ctx, grid, params, state):
    it = integrator_from_config(ctx.cfg["integrator"])
    rec = simulate(state, it, params)
    ctx.guard_events.extend(rec.guard_events)
    ctx.results["completed"] = rec.completed
    return it, rec


def run_simulate(ctx: RunContext):
    grid, params, state, bank = _setup(ctx)
    it, rec = _nonlinear_trajectory(ctx, grid, params, state)
    p, q, j0 = _indices(ctx)
    times = np.array(rec.times)
    ctx.add(write_csv(ctx.out / "norms.csv", ["time", "a_linf", "m_linf", "sup_hybrid"],
                      _norm_rows(times, rec.states, bank, p, q, j0)))
    ctx.add(write_csv(ctx.out / "diagnostics.csv", ["time", "dt", "a_linf", "tail_energy"],
                      [[d.time, d.dt, d.a_linf, d.tail_energy] for d in rec.diagnostics]))
    ctx.results["epq_norm"] = _epq(times, rec.states, bank, p, q, j0)
    ctx.results["final_time"] = float(times[-1])
    if len(rec.states) >= 3:
        ctx.results["residual"] = residual_check(times, rec.states, params, nonlinear=it.nonlinear)
    _maybe_snapshots(ctx, times, rec.states)


def _trajectory(ctx, grid, params, state, nonlinear: bool):
    if nonlinear:
        _, rec = _nonlinear_trajectory(ctx, grid, params, state)
        return np.array(rec.times), rec.states
    it = integrator_from_config(ctx.cfg["integrator"], nonlinear=False)
    times = snapshot_times(it)
    return times, linear_trajectory(state, params, times)


def run_norms(ctx: RunContext):
    grid, params, state, bank = _setup(ctx)
    nonlinear = bool(ctx.cfg["integrator"]["nonlinear"])
    times, states = _trajectory(ctx, grid, params, state, nonlinear)
    p, q, j0 = _indices(ctx)
    sup_part, _ = epq_specs(grid.dim, p, q, j0)
    header = ["time", "norm_id"] + [f"block_{j}" for j in bank.js] + ["total"]
    rows = []
    for t, s in zip(times, states):
        for label, f in (("grad_a", grad_a(s)), ("m", s.m)):
            for part, spec in (("high", sup_part.high), ("low", sup_part.low)):
                nid = f"{label}:B^{spec.s:g}_{{{spec.p:g},{spec.r:g}}}:{part}"
                rows.append(norm_row(float(t), nid, f, spec, bank))
    ctx.add(write_csv(ctx.out / "norms.csv", header, rows))
    ctx.results["epq_norm"] = _epq(times, states, bank, p, q, j0)
    ctx.results["j0"] = j0


def run_gevrey(ctx: RunContext):
    grid, params, state, bank = _setup(ctx)
    gv = ctx.cfg["gevrey"]
    spec = GevreySpec.for_params(params, gv["c0"])
    times, states = _trajectory(ctx, grid, params, state, bool(gv["nonlinear"]))
    p, q, j0 = _indices(ctx)
    big = multiplied_trajectory(times, states, spec)
    init = sup_hybrid(states[0], bank, p, q, j0)
    rows = []
    for t, s, b in zip(times, states, big):
        plain = sup_hybrid(s, bank, p, q, j0)
        gev = sup_hybrid(b, bank, p, q, j0)
        rows.append([float(t), plain, gev, gev / init if init > 0 else math.nan])
    ctx.add(write_csv(ctx.out / "norms.csv", ["time", "sup_hybrid", "gevrey_sup_hybrid", "ratio_to_initial"], rows))
    bound = heat_composition_bound(grid.dim, spec.c0)
    kc = kernel_constant(params)
    ctx.results.update({
        "c0": spec.c0,
        "heat_bound": bound,
        "kernel_constant": kc,
        "max_ratio": max((r[3] for r in rows), default=math.nan),
        "heat_check": heat_composition_check(grid, spec.c0, times[1:], slowest_rate(params)),
        "gevrey_epq_norm": _epq(times, big, bank, p, q, j0),
    })
    try:
        series, fit = track_radius(times, states, (float(gv["fit_t_min"]), float(gv["fit_t_max"])))
    except RadiusError as exc:
        ctx.results["radius_error"] = str(exc)
        return
    ctx.add(write_csv(ctx.out / "radius.csv", ["time", "radius", "fit_band_lo", "fit_band_hi", "residual"],
                      series.rows()))
    summary = {"c": fit.c, "beta": fit.beta, "residual": fit.residual, "t_lo": fit.t_lo, "t_hi": fit.t_hi}
    ctx.add(write_json(ctx.out / "radius_fit.json", summary))
    ctx.results["radius_fit"] = summary


def run_probes(ctx: RunContext):
    pc = ctx.cfg["probes"]
    out = []
    for eid in pc["estimates"]:
        try:
            rep = probe_inequality(eid, (pc["overrides"] or {}).get(eid), count=int(pc["count"]),
                                   seed=ctx.cfg.seed)
            out.append(rep.to_json())
        except InadmissibleParameters as exc:
            out.append({"estimate_id": eid, "rejected": exc.violations})
    ctx.add(write_json(ctx.out / "probes.json", out))
    ctx.results["probes"] = {r["estimate_id"]: r.get("fitted_constant", "rejected") for r in out}


def _flat_scalars(results: dict) -> dict:
    out = {}
    for k, v in sorted(results.items()):
        if isinstance(v, (int, float, bool, str)):
            out[k] = v
        elif isinstance(v, dict):
            for k2, v2 in sorted(v.items()):
                if isinstance(v2, (int, float, bool, str)):
                    out[f"{k}.{k2}"] = v2
    return out


def _sweep_point(args):
    raw, kind, out = args
    manifest = run(raw, kind, Path(out))
    return manifest


def run_sweep(ctx: RunContext):
    sw = ctx.cfg["sweep"]
    base = sw["base"]
    if base == "sweep":
        raise ConfigError(["sweep.base cannot be sweep"])
    values = list(sw["values"])
    jobs = []
    done = {}
    for i, v in enumerate(values):
        point = ctx.out / f"point_{i:03d}"
        mpath = point / "manifest.json"
        if mpath.exists():
            m = json.loads(mpath.read_text())
            if m.get("status") == "ok":
                done[i] = m
                continue
        raw = copy.deepcopy(ctx.cfg.data)
        raw.pop("sweep")
        raw["experiment"] = base
        raw = apply_overrides(raw, [f"{sw['parameter']}={json.dumps(v)}"])
        jobs.append((i, (raw, base, str(point))))
    ctx.results["resumed_points"] = sorted(done)
    workers = int(sw["workers"])
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (i, _), m in zip(jobs, pool.map(_sweep_point, [j for _, j in jobs])):
                done[i] = m
    else:
        for i, job in jobs:
            done[i] = _sweep_point(job)
    keys: list[str] = []
    flat = {}
    for i in sorted(done):
        flat[i] = _flat_scalars(done[i].get("results", {}))
        keys.extend(k for k in flat[i] if k not in keys)
    rows = [[i, json.dumps(values[i]), done[i]["status"]] + [flat[i].get(k, "") for k in keys]
            for i in sorted(done)]
    ctx.add(write_csv(ctx.out / "sweep.csv", ["index", "value", "status"] + keys, rows))
    ctx.results["points"] = len(done)


RUNNERS: dict[str, Callable[[RunContext], None]] = {
    "classify": run_classify,
    "linear-evolve": run_linear_evolve,
    "simulate": run_simulate,
    "norms": run_norms,
    "gevrey": run_gevrey,
    "probe-estimates": run_probes,
    "sweep": run_sweep,
}


def run(raw: dict, kind: Optional[str], out: Path) -> dict:
    """Validate, dispatch, write every artifact and finally manifest.json."""
    cfg = validate_config(raw, kind)
    out.mkdir(parents=True, exist_ok=True)
    for w in cfg.warnings:
        log.warning(w)
    ctx = RunContext(cfg, out)
    start = time.perf_counter()
    status, failure = "ok", None
    try:
        RUNNERS[cfg.kind](ctx)
    except Exception as exc:  # recorded in the manifest, then re-raised
        status, failure = "failed", f"{type(exc).__name__}: {exc}"
        log.error("run failed: %s", failure)
        _write_manifest(ctx, start, status, failure)
        raise
    return _write_manifest(ctx, start, status, failure)


def _write_manifest(ctx: RunContext, start: float, status: str, failure) -> dict:
    manifest = {
        "experiment": ctx.cfg.kind,
        "config": ctx.cfg.data,
        "code_version": __version__,
        "seed": ctx.cfg.seed,
        "wall_time_s": time.perf_counter() - start,
        "status": status,
        "failure": failure,
        "warnings": ctx.cfg.warnings,
        "gates": ctx.cfg.gates,
        "guard_events": ctx.guard_events,
        "results": ctx.results,
        "outputs": [
            {"path": str(p.relative_to(ctx.out)), "sha256": sha256(p), "bytes": p.stat().st_size}
            for p in ctx.files
        ],
    }
    write_json(ctx.out / "manifest.json", manifest)
    return _jsonable(manifest)
