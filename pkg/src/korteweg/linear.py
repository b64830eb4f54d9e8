"""Linearized spectral theory: regimes, eigenvalues, effective alpha and the exact propagator.

Per mode the longitudinal pair (a_hat, V_hat), V = Lambda^-1 div m, evolves by
    d/dt (a, V) = A(xi) (a, V),   A(xi) = [[0, -|xi|], [kappa |xi|^3, -nu |xi|^2]],
and the transverse part of m_hat is damped by exp(-mu |xi|^2 t).  In the scaled
variables (|xi| a, V) the matrix is |xi|^2 A0 with A0 = [[0, -1], [kappa, -nu]],
which is where both the matrix exponential and the closed form are evaluated.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .expm import expm_batched
from .fourier import SpectralField, TorusGrid
from .params import FluidParams, discriminant

CRITICAL_BAND = 1e-10
DEFECTIVE_GAP = 1e-6


class Regime(enum.Enum):
    REAL_SEPARATED = "RealSeparated"
    CRITICAL = "Critical"
    COMPLEX = "Complex"


def classify_regime(nu_bar: float, kappa_bar: float) -> Regime:
    disc = discriminant(nu_bar, kappa_bar)
    if abs(disc) < CRITICAL_BAND * nu_bar**2:
        return Regime.CRITICAL
    return Regime.REAL_SEPARATED if disc > 0 else Regime.COMPLEX


def classify(params: FluidParams) -> Regime:
    return classify_regime(params.nu_bar, params.kappa_bar)


def unit_eigenvalues(nu_bar, kappa_bar):
    """Eigenvalues of A0 named by decay rate: (slow, fast), complex dtype.

    The slow root comes from the product of roots, which avoids cancellation
    when kappa is small against nu^2.
    """
    nu = np.asarray(nu_bar, dtype=float)
    ka = np.asarray(kappa_bar, dtype=float)
    disc = np.asarray(discriminant(nu, ka))
    root = np.sqrt(disc.astype(complex))
    fast = -(nu + root) / 2.0
    slow = ka / fast
    return slow, fast


def eigenvalues(params: FluidParams, xi_norm) -> tuple[np.ndarray, np.ndarray]:
    """(slow, fast) eigenvalues of A(xi); slow has the smaller |Re|."""
    return eigenvalues_nk(params.nu_bar, params.kappa_bar, xi_norm)


def eigenvalues_nk(nu_bar, kappa_bar, xi_norm):
    slow, fast = unit_eigenvalues(nu_bar, kappa_bar)
    r2 = np.asarray(xi_norm, dtype=float) ** 2
    return slow * r2, fast * r2


def effective_alpha(params: FluidParams) -> tuple[tuple[float, float], tuple[float, float]]:
    """Both roots alpha of alpha^2 - nu alpha + kappa = 0, each paired with nu - alpha."""
    regime = classify(params)
    if regime is Regime.COMPLEX:
        raise ValueError("effective velocity is real only when nu_bar^2 >= 4 kappa_bar "
                         f"(discriminant {params.discriminant:.3e})")
    nu, ka = params.nu_bar, params.kappa_bar
    root = np.sqrt(max(params.discriminant, 0.0))
    big = 0.5 * (nu + root)
    small = ka / big
    out = []
    for alpha in (big, small):
        rest = nu - alpha
        if not rest > 0:
            raise ValueError(f"nu_bar - alpha must be positive, got {rest}")
        out.append((float(alpha), float(rest)))
    return out[0], out[1]


def slowest_rate(params: FluidParams) -> float:
    """min(mu, alpha, nu - alpha): the smallest diffusivity in the linear flow."""
    mu = params.mu_bar
    if classify(params) is Regime.COMPLEX:
        return min(mu, params.nu_bar / 2.0)
    (a1, r1), _ = effective_alpha(params)
    return min(mu, a1, r1)


def unit_matrix(nu_bar: float, kappa_bar: float) -> np.ndarray:
    return np.array([[0.0, -1.0], [kappa_bar, -nu_bar]])


def symbol_matrix(params: FluidParams, xi_norm: float) -> np.ndarray:
    """A(xi) acting on (a_hat, V_hat)."""
    r = float(xi_norm)
    return np.array([[0.0, -r], [params.kappa_bar * r**3, -params.nu_bar * r**2]])


@dataclass(frozen=True)
class PropagatorMatrix:
    """Per-mode propagator: transverse factor and the longitudinal block on (a_hat, V_hat)."""

    xi_norm: np.ndarray
    transverse: np.ndarray
    longitudinal: np.ndarray

    @property
    def scaled(self) -> np.ndarray:
        """Longitudinal block in the variables (|xi| a_hat, V_hat)."""
        r = np.asarray(self.xi_norm, dtype=float)
        g = self.longitudinal.copy()
        g[..., 0, 1] = g[..., 0, 1] * r
        safe = np.where(r > 0, r, 1.0)
        g[..., 1, 0] = np.where(r > 0, g[..., 1, 0] / safe, 0.0)
        return g


def _unscale(e: np.ndarray, r: np.ndarray) -> np.ndarray:
    g = e.copy()
    safe = np.where(r > 0, r, 1.0)
    g[..., 0, 1] = np.where(r > 0, e[..., 0, 1] / safe, 0.0)
    g[..., 1, 0] = e[..., 1, 0] * r
    return g


def scaled_kernel_expm(nu_bar, kappa_bar, tau) -> np.ndarray:
    """exp(tau A0) by scaling and squaring; tau = t |xi|^2, broadcast over inputs."""
    nu, ka, tau = np.broadcast_arrays(np.asarray(nu_bar, float), np.asarray(kappa_bar, float),
                                      np.asarray(tau, float))
    m = np.zeros(nu.shape + (2, 2))
    m[..., 0, 1] = -tau
    m[..., 1, 0] = ka * tau
    m[..., 1, 1] = -nu * tau
    return expm_batched(m)


def scaled_kernel_closed(nu_bar, kappa_bar, tau, defective_gap: float = DEFECTIVE_GAP,
                         branch: Optional[str] = None) -> np.ndarray:
    """Closed-form exp(tau A0) via the two-eigenvalue (Sylvester) formula.

    Away from the critical set: E = c0 I + c1 A0 with
        c1 = (e^{l1 tau} - e^{l2 tau}) / (l1 - l2),  c0 = e^{l2 tau} - l2 c1,
    evaluated through expm1 so nearby eigenvalues do not cancel.  When the gap
    is below defective_gap * |l_fast| the defective limit
        E = e^{l tau} (I + tau (A0 - l I))
    is used.  branch forces "spectral" or "defective" for continuity checks.
    """
    nu, ka, tau = np.broadcast_arrays(np.asarray(nu_bar, float), np.asarray(kappa_bar, float),
                                      np.asarray(tau, float))
    slow, fast = unit_eigenvalues(nu, ka)
    gap = slow - fast
    near = np.abs(gap) < defective_gap * np.abs(fast)
    if branch == "spectral":
        near = np.zeros_like(near)
    elif branch == "defective":
        near = np.ones_like(near)

    safe_gap = np.where(gap != 0, gap, 1.0)
    small = np.abs(gap * tau) < 1.0
    with np.errstate(over="ignore", invalid="ignore"):
        c1_small = np.exp(fast * tau) * np.expm1(np.where(small, gap * tau, 0.0)) / safe_gap
        c1_large = (np.exp(slow * tau) - np.exp(fast * tau)) / safe_gap
    c1 = np.where(small, c1_small, c1_large)
    c1 = np.where(gap != 0, c1, tau * np.exp(fast * tau))
    c0 = np.exp(fast * tau) - fast * c1

    mean = -nu / 2.0
    d_exp = np.exp(mean * tau)
    d1 = tau * d_exp
    d0 = d_exp - mean * d1

    c0 = np.where(near, d0, c0)
    c1 = np.where(near, d1, c1)
    e = np.empty(nu.shape + (2, 2), dtype=complex)
    e[..., 0, 0] = c0
    e[..., 0, 1] = -c1
    e[..., 1, 0] = ka * c1
    e[..., 1, 1] = c0 - nu * c1
    return e.real


def semigroup_matrix(params: FluidParams, xi_norm, t: float, method: str = "expm") -> PropagatorMatrix:
    """Propagator for modes of norm xi_norm; method "expm" (authoritative) or "closed"."""
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    r = np.asarray(xi_norm, dtype=float)
    tau = t * r**2
    if method == "expm":
        e = scaled_kernel_expm(params.nu_bar, params.kappa_bar, tau)
    elif method == "closed":
        e = scaled_kernel_closed(params.nu_bar, params.kappa_bar, tau)
    else:
        raise ValueError(f"unknown method {method!r}")
    if t == 0:
        e = np.broadcast_to(np.eye(2), e.shape).copy()
    trans = np.exp(-params.mu_bar * tau)
    return PropagatorMatrix(r, trans, _unscale(e, r))


@dataclass(frozen=True)
class FluidState:
    """Density fluctuation a (scalar) and momentum m (d-vector)."""

    a: SpectralField
    m: SpectralField

    def __post_init__(self):
        if self.a.is_vector or not self.m.is_vector:
            raise ValueError("FluidState needs scalar a and vector m")
        if self.a.grid != self.m.grid:
            raise ValueError("a and m live on different grids")

    @property
    def grid(self) -> TorusGrid:
        return self.a.grid

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "FluidState":
        return cls(SpectralField.zeros(grid), SpectralField.zeros(grid, grid.dim))

    @classmethod
    def from_coeffs(cls, grid: TorusGrid, a: np.ndarray, m: np.ndarray) -> "FluidState":
        return cls(SpectralField(grid, a), SpectralField(grid, m))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.a.coeffs[None], self.m.coeffs])

    @classmethod
    def from_stacked(cls, grid: TorusGrid, u: np.ndarray) -> "FluidState":
        return cls(SpectralField(grid, u[0]), SpectralField(grid, u[1:]))

    def __add__(self, other: "FluidState") -> "FluidState":
        return FluidState(self.a + other.a, self.m + other.m)

    def __sub__(self, other: "FluidState") -> "FluidState":
        return FluidState(self.a - other.a, self.m - other.m)

    def __mul__(self, s: float) -> "FluidState":
        return FluidState(self.a * s, self.m * s)

    __rmul__ = __mul__


def dilate_state(state: FluidState, factor: int) -> FluidState:
    """(a, m) -> (a(factor x), factor m(factor x)) on a grid refined by factor, same period.

    Mode k moves to mode factor * k, so a solution with pressure P maps to a
    solution with pressure factor^2 P observed at time t / factor^2.
    """
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"dilation factor must be a positive integer, got {factor}")
    src = state.grid
    dst = TorusGrid(src.dim, src.n * int(factor), src.period)
    idx = np.ix_(*([(src.wavenumbers * int(factor)) % dst.n] * src.dim))
    a = np.zeros(dst.shape, dtype=complex)
    m = np.zeros((src.dim,) + dst.shape, dtype=complex)
    a[idx] = state.a.coeffs
    m[(slice(None),) + idx] = factor * state.m.coeffs
    return FluidState.from_coeffs(dst, a, m)


class LinearPropagator:
    """Applies exp(tL) to stacked (a, m) coefficient arrays on one grid.

    Matrices are cached per time step; the longitudinal block is stored in the
    (a_hat, v_hat) variables with v_hat = xi_hat . m_hat, so V_hat = i v_hat.
    """

    def __init__(self, grid: TorusGrid, params: FluidParams, method: str = "expm"):
        self.grid = grid
        self.params = params
        self.method = method
        self._cache: dict[float, tuple[np.ndarray, ...]] = {}

    def _factors(self, t: float):
        key = float(t)
        hit = self._cache.get(key)
        if hit is None:
            pm = semigroup_matrix(self.params, self.grid.xi_norm, t, self.method)
            g = pm.longitudinal
            hit = (pm.transverse, g[..., 0, 0], 1j * g[..., 0, 1], -1j * g[..., 1, 0], g[..., 1, 1])
            if len(self._cache) > 16:
                self._cache.clear()
            self._cache[key] = hit
        return hit

    def apply(self, u: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return u.copy()
        trans, g_aa, g_av, g_va, g_vv = self._factors(t)
        xh = self.grid.xi_hat
        a = u[0]
        m = u[1:]
        v = np.sum(xh * m, axis=0)
        m_t = m - xh * v
        out = np.empty_like(u)
        out[0] = g_aa * a + g_av * v
        v_new = g_va * a + g_vv * v
        out[1:] = trans * m_t + xh * v_new
        zero = self.grid.xi_norm == 0
        out[:, zero] = u[:, zero]
        return out


def propagate_linear(state: FluidState, params: FluidParams, t: float,
                     propagator: Optional[LinearPropagator] = None) -> FluidState:
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    prop = propagator or LinearPropagator(state.grid, params)
    if prop.grid != state.grid:
        raise ValueError("propagator grid does not match state grid")
    return FluidState.from_stacked(state.grid, prop.apply(state.stacked(), t))


def linear_operator(grid: TorusGrid, params: FluidParams, u: np.ndarray) -> np.ndarray:
    """L(a, m) = (-div m, mu Lap m + (nu - mu) grad div m + kappa grad Lap a) on stacked coefficients."""
    xi = grid.xi
    r2 = grid.xi_sq
    a, m = u[0], u[1:]
    xm = np.sum(xi * m, axis=0)
    out = np.empty_like(u)
    out[0] = -1j * xm
    out[1:] = (-params.mu_bar * r2 * m - (params.nu_bar - params.mu_bar) * xi * xm
               - 1j * params.kappa_bar * r2 * xi * a)
    return out


def kernel_constant(params: FluidParams, taus: Optional[np.ndarray] = None) -> float:
    """sup_tau ||exp(tau A0)||_2 exp(rate tau) with rate the slowest diffusivity.

    Bounds the non-normal transient of the longitudinal block; the transverse
    factor never exceeds 1 after the same rescaling since mu >= rate.
    """
    rate = slowest_rate(params)
    if taus is None:
        taus = np.concatenate([[0.0], np.geomspace(1e-4, 200.0 / rate, 4000)])
    e = scaled_kernel_closed(params.nu_bar, params.kappa_bar, taus)
    norms = np.linalg.norm(e, ord=2, axis=(-2, -1))
    return float(max(1.0, np.max(norms * np.exp(rate * taus))))
