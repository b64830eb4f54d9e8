"""Gevrey multipliers exp(r |xi|_1), trajectory norms under them, and analyticity-radius fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fourier import SpectralField, TorusGrid
from .linear import FluidState, slowest_rate
from .littlewood_paley import DyadicFilterBank, epq_norm_states
from .params import FluidParams

SAFETY = 0.9
NOISE_FLOOR = 1e-13
BAND = (1e-12, 1e-2)
_LOG_MAX = math.log(np.finfo(float).max)


class MultiplierOverflow(OverflowError):
    pass


class RadiusError(ValueError):
    pass


@dataclass(frozen=True)
class GevreySpec:
    c0: float

    def __post_init__(self):
        if not self.c0 >= 0:
            raise ValueError(f"c0 must be non-negative, got {self.c0}")

    @classmethod
    def for_params(cls, params: FluidParams, c0: Optional[float] = None) -> "GevreySpec":
        """Default c0 = 0.9 * 2 min(mu, alpha, nu - alpha); an override must stay below the cap."""
        cap = 2.0 * slowest_rate(params)
        if c0 is None:
            return cls(SAFETY * cap)
        if c0 > cap:
            raise ValueError(f"c0 = {c0} exceeds 2 min(mu, alpha, nu - alpha) = {cap}")
        return cls(float(c0))

    def radius(self, t: float) -> float:
        return math.sqrt(self.c0 * t)


def apply_multiplier(f: SpectralField, r: float) -> SpectralField:
    """Multiply the coefficient at xi by exp(r |xi|_1)."""
    if r < 0:
        raise ValueError(f"multiplier radius must be non-negative, got {r}")
    if r == 0:
        return SpectralField(f.grid, f.coeffs.copy())
    l1 = f.grid.xi_l1
    mag = np.abs(f.coeffs)
    if f.is_vector:
        mag = mag.max(axis=0)
    with np.errstate(divide="ignore"):
        log_out = np.log(mag) + r * l1
    if np.any(log_out >= _LOG_MAX):
        bad = float(l1[log_out >= _LOG_MAX].min())
        shell = int(round(bad / f.grid.dk))
        raise MultiplierOverflow(f"exp({r:.4g} |xi|_1) overflows on |k|_1 shell {shell} (|xi|_1 = {bad:.4g})")
    return SpectralField(f.grid, f.coeffs * np.exp(r * l1))


def apply_multiplier_state(state: FluidState, r: float) -> FluidState:
    return FluidState(apply_multiplier(state.a, r), apply_multiplier(state.m, r))


def heat_composition_bound(dim: int, c0: float) -> float:
    """sup over xi and t > 0 of exp(sqrt(c0 t)|xi|_1 - t|xi|^2) = exp(d c0 / 4)."""
    return math.exp(dim * c0 / 4.0)


def heat_composition_exponent(grid: TorusGrid, c0: float, t: float, diffusivity: float = 1.0) -> np.ndarray:
    """Mode-wise exponent sqrt(c0 t)|xi|_1 - diffusivity t |xi|^2 on every lattice point."""
    return math.sqrt(c0 * t) * grid.xi_l1 - diffusivity * t * grid.xi_sq


def heat_composition_check(grid: TorusGrid, c0: float, times: Sequence[float],
                           diffusivity: float = 1.0) -> float:
    """Largest exp(exponent) / bound over all lattice points and the given times.

    With diffusivity kappa the bound is exp(d c0 / (4 kappa)); the value returned is <= 1
    exactly when the bound holds everywhere.
    """
    cap = grid.dim * c0 / (4.0 * diffusivity)
    worst = -math.inf
    for t in times:
        worst = max(worst, float(heat_composition_exponent(grid, c0, t, diffusivity).max()))
    return math.exp(worst - cap)


def multiplied_trajectory(times: Sequence[float], states: Sequence[FluidState],
                          spec: GevreySpec) -> list[FluidState]:
    return [apply_multiplier_state(s, spec.radius(t)) for t, s in zip(times, states)]


def gevrey_trajectory_norm(times: Sequence[float], states: Sequence[FluidState], spec: GevreySpec,
                           p: float, q: float, bank: DyadicFilterBank,
                           horizon: Optional[float] = None, j0: Optional[int] = None) -> float:
    """E^{p,q} norm of exp(sqrt(c0 t) Lambda_1)(a, m) along the trajectory."""
    return epq_norm_states(times, multiplied_trajectory(times, states, spec), p, q, bank, horizon, j0)


def gevrey_snapshot_norms(times: Sequence[float], states: Sequence[FluidState], spec: GevreySpec,
                          p: float, q: float, bank: DyadicFilterBank,
                          j0: Optional[int] = None) -> np.ndarray:
    """Running E^{p,q} norm over [0, t_k] for every snapshot k >= 1."""
    t = np.asarray(times, dtype=float)
    mult = multiplied_trajectory(times, states, spec)
    out = np.empty(len(t) - 1)
    for k in range(1, len(t)):
        out[k - 1] = epq_norm_states(t[: k + 1], mult[: k + 1], p, q, bank, None, j0)
    return out


@dataclass(frozen=True)
class RadiusFit:
    radius: float
    band_lo: float
    band_hi: float
    residual: float
    shells_used: int


def shell_envelope(f: SpectralField) -> tuple[np.ndarray, np.ndarray]:
    """(|xi|_1 value, max modulus) for every integer |k|_1 shell."""
    mag = np.abs(f.coeffs)
    if f.is_vector:
        mag = np.sqrt(np.sum(mag**2, axis=0))
    shells = f.grid.k_l1.reshape(-1)
    flat = mag.reshape(-1)
    env = np.zeros(int(shells.max()) + 1)
    np.maximum.at(env, shells, flat)
    return np.arange(env.size) * f.grid.dk, env


def estimate_radius(f: SpectralField) -> RadiusFit:
    """Analyticity radius as minus the slope of log(shell max) against |xi|_1.

    The fit band is every shell whose maximum lies in [1e-12, 1e-2] of the field
    maximum.  A spectrum that never drops into that band (no decay across the
    grid) is fitted over all shells above the noise floor instead.
    """
    x, env = shell_envelope(f)
    x, env = x[1:], env[1:]
    top = float(env.max(initial=0.0))
    if top == 0.0:
        raise RadiusError("field is identically zero below the mean; radius undefined")
    rel = env / top
    alive = rel > NOISE_FLOOR
    if int(alive.sum()) < 3:
        raise RadiusError(f"only {int(alive.sum())} populated |k|_1 shells above the noise floor")
    band = alive & (rel >= BAND[0]) & (rel <= BAND[1])
    if int(band.sum()) < 3:
        band = alive
    xs, ys = x[band], np.log(env[band])
    slope, icpt = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + icpt)
    return RadiusFit(
        radius=max(0.0, float(-slope)),
        band_lo=float(xs.min()),
        band_hi=float(xs.max()),
        residual=float(np.sqrt(np.mean(resid**2))),
        shells_used=int(band.sum()),
    )


@dataclass(frozen=True)
class RadiusSeries:
    times: np.ndarray
    radius: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray
    residual: np.ndarray

    def rows(self) -> list[list[float]]:
        return [list(map(float, r)) for r in zip(self.times, self.radius, self.band_lo,
                                                  self.band_hi, self.residual)]


@dataclass(frozen=True)
class PowerLawFit:
    c: float
    beta: float
    residual: float
    t_lo: float
    t_hi: float


def track_radius(times: Sequence[float], states: Sequence[FluidState],
                 t_range: tuple[float, float] = (0.1, 10.0)) -> tuple[RadiusSeries, PowerLawFit]:
    """Radius of the density component per snapshot and a fit r = c t^beta over t_range."""
    rows = [(t, estimate_radius(s.a)) for t, s in zip(times, states) if t > 0]
    if not rows:
        raise RadiusError("no snapshots with t > 0")
    t = np.array([r[0] for r in rows])
    fits = [r[1] for r in rows]
    series = RadiusSeries(
        times=t,
        radius=np.array([f.radius for f in fits]),
        band_lo=np.array([f.band_lo for f in fits]),
        band_hi=np.array([f.band_hi for f in fits]),
        residual=np.array([f.residual for f in fits]),
    )
    return series, fit_power_law(series.times, series.radius, t_range)


def fit_power_law(t: np.ndarray, r: np.ndarray, t_range: tuple[float, float]) -> PowerLawFit:
    lo, hi = t_range
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12)) & (r > 0)
    if int(sel.sum()) < 2:
        raise RadiusError(f"need two positive radii in t in [{lo}, {hi}], got {int(sel.sum())}")
    lt, lr = np.log(t[sel]), np.log(r[sel])
    beta, icpt = np.polyfit(lt, lr, 1)
    resid = lr - (beta * lt + icpt)
    return PowerLawFit(c=float(np.exp(icpt)), beta=float(beta),
                       residual=float(np.sqrt(np.mean(resid**2))),
                       t_lo=float(t[sel].min()), t_hi=float(t[sel].max()))
