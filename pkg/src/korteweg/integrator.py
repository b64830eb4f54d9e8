"""Exponential time stepping with the exact linear propagator.

With G(t) the linear semigroup and N(u) = (0, g(u)) the forcing, the schemes are
    exponential-euler: u1 = G(dt) (u + dt N(u))
    etdrk2:            u* = G(dt) (u + dt N(u))
                       u1 = G(dt) (u + dt/2 N(u)) + dt/2 N(u*)
The second is the trapezoidal (Heun) rule in the integrating-factor variable,
second order, and reduces to the first when N vanishes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fourier import TorusGrid
from .linear import FluidState, LinearPropagator, linear_operator
from .nonlinear import (
    DENSITY_MARGIN,
    ClosureTable,
    DensityGuardError,
    UnderResolvedError,
    build_closures,
    evaluate_g,
)
from .params import FluidParams

log = logging.getLogger(__name__)

SCHEMES = ("exponential-euler", "etdrk2")
DT_MIN, DT_MAX = 1e-6, 1e-1


class GuardTrip(RuntimeError):
    def __init__(self, time: float, cause: str):
        self.time = time
        self.cause = cause
        super().__init__(f"guard tripped at t = {time:.6g}: {cause}")


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "etdrk2"
    dt: float = 1e-2
    t_end: float = 1.0
    adapt: bool = False
    tol: float = 1e-3
    snapshot_stride: int = 1
    nonlinear: bool = True
    density_margin: float = DENSITY_MARGIN
    dt_min: float = DT_MIN
    dt_max: float = DT_MAX

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")


class _Forcing:
    def __init__(self, params: FluidParams, closures: Optional[ClosureTable], enabled: bool,
                 margin: float):
        self.params = params
        self.closures = closures or build_closures(params)
        self.enabled = enabled
        self.margin = margin

    def __call__(self, grid: TorusGrid, u: np.ndarray) -> np.ndarray:
        out = np.zeros_like(u)
        if not self.enabled:
            return out
        state = FluidState.from_stacked(grid, u)
        out[1:] = evaluate_g(state, self.closures, self.params, self.margin).total.coeffs
        return out


def _advance(u: np.ndarray, dt: float, prop: LinearPropagator, forcing: _Forcing,
             scheme: str, n0: Optional[np.ndarray] = None) -> np.ndarray:
    grid = prop.grid
    n0 = forcing(grid, u) if n0 is None else n0
    if not forcing.enabled:
        return prop.apply(u, dt)
    euler = prop.apply(u + dt * n0, dt)
    if scheme == "exponential-euler":
        return euler
    n1 = forcing(grid, euler)
    return prop.apply(u + 0.5 * dt * n0, dt) + 0.5 * dt * n1


def step(state: FluidState, dt: float, params: FluidParams, closures: Optional[ClosureTable] = None,
         scheme: str = "etdrk2", propagator: Optional[LinearPropagator] = None,
         nonlinear: bool = True, margin: float = DENSITY_MARGIN) -> FluidState:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    prop = propagator or LinearPropagator(state.grid, params)
    forcing = _Forcing(params, closures, nonlinear, margin)
    out = _advance(state.stacked(), dt, prop, forcing, scheme)
    if not np.all(np.isfinite(out)):
        raise GuardTrip(float("nan"), "non-finite coefficients")
    return FluidState.from_stacked(state.grid, out)


@dataclass
class StepDiagnostic:
    time: float
    dt: float
    a_linf: float
    tail_energy: float


@dataclass
class TrajectoryRecord:
    times: list[float]
    states: list[FluidState]
    diagnostics: list[StepDiagnostic] = field(default_factory=list)
    guard_events: list[dict] = field(default_factory=list)
    completed: bool = True

    @property
    def grid(self) -> TorusGrid:
        return self.states[0].grid

    def a_linf(self) -> np.ndarray:
        return np.array([float(np.max(np.abs(s.a.to_physical()))) for s in self.states])


def tail_energy(u: np.ndarray, grid: TorusGrid) -> float:
    """Energy fraction in the outer half of the dealiased band (a resolution indicator)."""
    e = np.sum(np.abs(u) ** 2, axis=0)
    total = float(e.sum())
    if total == 0.0:
        return 0.0
    outer = np.max(np.abs(grid.k_int), axis=0) > grid.n // 6
    return float(e[outer].sum()) / total


def _a_linf(u: np.ndarray, grid: TorusGrid) -> float:
    return float(np.max(np.abs(FluidState.from_stacked(grid, u).a.to_physical())))


def simulate(initial: FluidState, config: IntegratorConfig, params: FluidParams,
             closures: Optional[ClosureTable] = None,
             propagator: Optional[LinearPropagator] = None) -> TrajectoryRecord:
    grid = initial.grid
    prop = propagator or LinearPropagator(grid, params)
    forcing = _Forcing(params, closures, config.nonlinear, config.density_margin)
    u = initial.stacked()
    t = 0.0
    dt = config.dt
    rec = TrajectoryRecord([0.0], [initial])
    n_steps = 0
    eps = 1e-12 * config.t_end
    while t < config.t_end - eps:
        try:
            n0 = forcing(grid, u)
            if config.adapt and forcing.enabled:
                dt = _adapt(u, n0, dt, config, rec, t)
            h = min(dt, config.t_end - t)
            u_new = _advance(u, h, prop, forcing, config.scheme, n0)
            if not np.all(np.isfinite(u_new)):
                raise GuardTrip(t + h, "non-finite coefficients")
        except DensityGuardError as exc:
            _stop(rec, t, f"density margin: {exc}")
            break
        except UnderResolvedError as exc:
            _stop(rec, t, f"under-resolved: {exc}")
            break
        except GuardTrip as exc:
            _stop(rec, exc.time, exc.cause)
            break
        t = t + h if t + h < config.t_end - eps else config.t_end
        u = u_new
        n_steps += 1
        rec.diagnostics.append(StepDiagnostic(t, h, _a_linf(u, grid), tail_energy(u, grid)))
        if n_steps % config.snapshot_stride == 0 or t >= config.t_end:
            rec.times.append(t)
            rec.states.append(FluidState.from_stacked(grid, u))
    return rec


def _adapt(u, n0, dt, config: IntegratorConfig, rec: TrajectoryRecord, t: float) -> float:
    """Halve while dt |N(u)| > tol |u|; double when below tol/10 of it."""
    size = float(np.linalg.norm(u))
    push = float(np.linalg.norm(n0))
    if size == 0.0 or push == 0.0:
        return min(dt * 2.0, config.dt_max)
    while dt * push > config.tol * size and dt > config.dt_min:
        dt = max(dt / 2.0, config.dt_min)
    if dt * push > config.tol * size:
        rec.guard_events.append({"time": t, "cause": "step size floor reached", "dt": dt})
    elif dt * push < 0.1 * config.tol * size:
        dt = min(dt * 2.0, config.dt_max)
    return dt


def _stop(rec: TrajectoryRecord, t: float, cause: str):
    log.warning("simulation stopped at t = %.6g: %s", t, cause)
    rec.guard_events.append({"time": float(t), "cause": cause})
    rec.completed = False


def residual_check(times, states, params: FluidParams, closures: Optional[ClosureTable] = None,
                   nonlinear: bool = True) -> float:
    """Centered-difference d/dt of the snapshots against L u + N(u) at interior snapshots.

    Returns max_k |D_t u_k - F(u_k)|_inf / max_k |F(u_k)|_inf.
    """
    if len(states) < 3:
        raise ValueError(f"residual check needs at least 3 snapshots, got {len(states)}")
    grid = states[0].grid
    forcing = _Forcing(params, closures, nonlinear, DENSITY_MARGIN)
    t = np.asarray(times, dtype=float)
    worst = 0.0
    scale = 0.0
    for k in range(1, len(states) - 1):
        u = states[k].stacked()
        rhs = linear_operator(grid, params, u) + forcing(grid, u)
        fd = (states[k + 1].stacked() - states[k - 1].stacked()) / (t[k + 1] - t[k - 1])
        worst = max(worst, float(np.max(np.abs(fd - rhs))))
        scale = max(scale, float(np.max(np.abs(rhs))))
    if scale == 0.0:
        return 0.0 if worst == 0.0 else math.inf
    return worst / scale
