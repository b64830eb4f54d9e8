"""Composite closures, the nonlinear momentum forcing g = g1 + ... + g6, and a physical oracle.

Convention: d_t m = mu Lap m + (nu - mu) grad div m + kappa grad Lap a + g, with
    g1 = div((Q(a) - 1) m (x) m)
    g2 = -mu Lap(Q(a) m) - (mu + lambda) grad div(Q(a) m)
    g3 = div(mu~(a) D(u)) + grad(lambda~(a) div u),        u = (1 - Q(a)) m
    g4 = -grad(a G(a))
    g5 = grad(kappa~1(a) Lap a)
    g6 = (rho*/2) grad((kappa~2(a) + kappa_check) |grad a|^2)
         - div((kappa~3(a) + kappa) grad a (x) grad a)
Signs and the factor on g3 are pinned by agreement with the momentum equation
written directly in (rho, u).  All derivatives act on the 2x-padded spectrum,
all products are pointwise on the padded grid, and the result is truncated and
2/3-masked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from .fourier import Padder, SpectralField, TorusGrid, high_band_fraction, inverse
from .linear import FluidState, linear_operator
from .params import FluidParams

DENSITY_MARGIN = 0.1
ALIAS_TOL = 1e-10


class DensityGuardError(RuntimeError):
    """Raised when the density excess a comes within the margin of vacuum."""


class UnderResolvedError(RuntimeError):
    """Raised when a state carries energy outside the dealiased band."""


Scalar = Callable[[np.ndarray], np.ndarray]


def _in_a(poly_x: Polynomial, rho_star: float) -> Polynomial:
    """Re-express a polynomial in x = rho - rho* as a polynomial in a = x / rho*."""
    c = poly_x.coef * rho_star ** np.arange(len(poly_x.coef))
    return Polynomial(c)


def _vanish(poly: Polynomial) -> Polynomial:
    c = poly.coef.copy()
    c[0] = 0.0
    return Polynomial(c)


@dataclass(frozen=True)
class ClosureTable:
    """The seven composite functions of a, each vanishing at a = 0."""

    Q: Scalar
    Q_prime: Scalar
    G: Polynomial
    mu_t: Polynomial
    lambda_t: Polynomial
    kappa1_t: Polynomial
    kappa2_t: Polynomial
    kappa3_t: Polynomial

    NAMES = ("Q", "G", "mu_t", "lambda_t", "kappa1_t", "kappa2_t", "kappa3_t")

    def functions(self) -> dict[str, Scalar]:
        return {name: getattr(self, name) for name in self.NAMES}

    def derivatives(self) -> dict[str, Scalar]:
        out: dict[str, Scalar] = {"Q": self.Q_prime}
        for name in self.NAMES[1:]:
            out[name] = getattr(self, name).deriv()
        return out


def _q(a: np.ndarray) -> np.ndarray:
    return a / (a + 1.0)


def _q_prime(a: np.ndarray) -> np.ndarray:
    return 1.0 / (a + 1.0) ** 2


def build_closures(params: FluidParams) -> ClosureTable:
    rs = params.rho_star
    p_a = _in_a(params.pressure, rs)
    # a G(a) = (P(rho) - P(rho*)) / rho*; drop the (zero) linear coefficient and divide by a
    g_coef = p_a.coef[2:] / rs if len(p_a.coef) > 2 else np.zeros(1)
    g_poly = Polynomial(np.concatenate([[0.0], g_coef]))
    mu_a = _in_a(params.shear, rs)
    lam_a = _in_a(params.bulk, rs)
    kap_a = _in_a(params.capillarity, rs)
    rho_a = Polynomial([rs, rs])
    # d kappa / d rho = (d kappa / d a) / rho*
    kap_rho_prime = kap_a.deriv() * (1.0 / rs)
    return ClosureTable(
        Q=_q,
        Q_prime=_q_prime,
        G=_vanish(g_poly),
        mu_t=_vanish(mu_a * (2.0 / rs)),
        lambda_t=_vanish(lam_a * (1.0 / rs)),
        kappa1_t=_vanish(rho_a * kap_a),
        kappa2_t=_vanish(kap_a + rho_a * kap_rho_prime),
        kappa3_t=_vanish(kap_a * rs),
    )


@dataclass(frozen=True)
class RhsBreakdown:
    terms: tuple[SpectralField, ...]

    @property
    def total(self) -> SpectralField:
        out = self.terms[0]
        for t in self.terms[1:]:
            out = out + t
        return out

    def __getitem__(self, i: int) -> SpectralField:
        """1-based access: breakdown[1] is g1."""
        return self.terms[i - 1]


class _Fine:
    """Spectral calculus on the padded grid."""

    def __init__(self, grid: TorusGrid):
        self.pad = Padder(grid, 2)
        self.grid = self.pad.fine
        self.xi = self.grid.xi

    def phys(self, c: np.ndarray) -> np.ndarray:
        return inverse(self.grid, c)

    def spec(self, v: np.ndarray) -> np.ndarray:
        return self.pad.fine_forward(v)

    def grad(self, c: np.ndarray) -> np.ndarray:
        return 1j * self.xi * c

    def div(self, c: np.ndarray) -> np.ndarray:
        return np.sum(1j * self.xi * c, axis=0)

    def lap(self, c: np.ndarray) -> np.ndarray:
        return -self.grid.xi_sq * c

    def div_tensor(self, t: np.ndarray) -> np.ndarray:
        """Row-wise divergence: (div T)_i = sum_j d_j T_ij, T given in physical space."""
        th = self.spec(t)
        return np.sum(1j * self.xi[None] * th, axis=1)

    def grad_phys(self, c: np.ndarray) -> np.ndarray:
        """Physical Jacobian J[i, j] = d_j c_i for vector coefficients c."""
        return self.phys(1j * self.xi[None] * c[:, None])

    def finish(self, c: np.ndarray) -> np.ndarray:
        return self.pad.truncate(c) * self.pad.coarse.dealias_mask


def _guard(a_phys: np.ndarray, margin: float):
    low = float(a_phys.min())
    if low <= -1.0 + margin:
        raise DensityGuardError(f"density excess min a = {low:.4f} violates margin {margin}")


def _check_band(state: FluidState):
    frac = max(high_band_fraction(state.a), high_band_fraction(state.m))
    if frac > ALIAS_TOL:
        raise UnderResolvedError(f"state energy fraction {frac:.3e} outside the dealiased band")


def evaluate_g(state: FluidState, closures: ClosureTable, params: FluidParams,
               margin: float = DENSITY_MARGIN) -> RhsBreakdown:
    _check_band(state)
    grid = state.grid
    fn = _Fine(grid)
    d = grid.dim
    a_h = fn.pad.pad(state.a.coeffs)
    m_h = fn.pad.pad(state.m.coeffs)
    a = fn.phys(a_h)
    _guard(a, margin)
    m = fn.phys(m_h)
    ga_h = fn.grad(a_h)
    ga = fn.phys(ga_h)
    lap_a = fn.phys(fn.lap(a_h))
    q = closures.Q(a)
    mu, lam = params.mu_bar, params.lambda_bar

    g1 = fn.div_tensor((q - 1.0) * m[:, None] * m[None, :])

    qm_h = fn.spec(q * m)
    g2 = -mu * fn.lap(qm_h) - (mu + lam) * fn.grad(fn.div(qm_h))

    u_h = fn.spec((1.0 - q) * m)
    jac = fn.grad_phys(u_h)
    strain = 0.5 * (jac + np.swapaxes(jac, 0, 1))
    div_u = np.trace(jac, axis1=0, axis2=1)
    g3 = fn.div_tensor(closures.mu_t(a) * strain) + fn.grad(fn.spec(closures.lambda_t(a) * div_u))

    g4 = -fn.grad(fn.spec(a * closures.G(a)))

    g5 = fn.grad(fn.spec(closures.kappa1_t(a) * lap_a))

    grad_sq = np.sum(ga**2, axis=0)
    outer = ga[:, None] * ga[None, :]
    g6 = (0.5 * params.rho_star * fn.grad(fn.spec((closures.kappa2_t(a) + params.kappa_check) * grad_sq))
          - fn.div_tensor((closures.kappa3_t(a) + params.kappa_bar) * outer))

    terms = tuple(SpectralField(grid, fn.finish(g)) for g in (g1, g2, g3, g4, g5, g6))
    assert all(t.coeffs.shape == (d,) + grid.shape for t in terms)
    return RhsBreakdown(terms)


def g_gradient_part6(state: FluidState, closures: ClosureTable, params: FluidParams) -> SpectralField:
    """The grad(...) half of g6 alone, for structure checks."""
    fn = _Fine(state.grid)
    a_h = fn.pad.pad(state.a.coeffs)
    a = fn.phys(a_h)
    ga = fn.phys(fn.grad(a_h))
    val = (closures.kappa2_t(a) + params.kappa_check) * np.sum(ga**2, axis=0)
    return SpectralField(state.grid, fn.finish(0.5 * params.rho_star * fn.grad(fn.spec(val))))


def _momentum_rhs_fine(fn: _Fine, rho: np.ndarray, u: np.ndarray, params: FluidParams) -> np.ndarray:
    """(1/rho*) [-div(rho u u) - grad P + div(2 mu D u) + grad(lambda div u) + div K] on the padded grid."""
    if float(rho.min()) <= 0.0:
        raise DensityGuardError(f"non-positive density {float(rho.min()):.4e}")
    x = rho - params.rho_star
    rho_h = fn.spec(rho)
    u_h = fn.spec(u)
    grho = fn.phys(fn.grad(rho_h))
    lap_rho = fn.phys(fn.lap(rho_h))
    kap = params.capillarity(x)
    kap_p = params.capillarity.deriv()(x)

    convect = fn.div_tensor(rho * u[:, None] * u[None, :])
    pressure = fn.grad(fn.spec(params.pressure(x)))
    jac = fn.grad_phys(u_h)
    strain = 0.5 * (jac + np.swapaxes(jac, 0, 1))
    div_u = np.trace(jac, axis1=0, axis2=1)
    viscous = fn.div_tensor(2.0 * params.shear(x) * strain) + fn.grad(fn.spec(params.bulk(x) * div_u))
    scalar_k = rho * kap * lap_rho + 0.5 * (kap + rho * kap_p) * np.sum(grho**2, axis=0)
    korteweg = fn.grad(fn.spec(scalar_k)) - fn.div_tensor(kap * grho[:, None] * grho[None, :])
    return (-convect - pressure + viscous + korteweg) / params.rho_star


def physical_oracle_rhs(rho: SpectralField, u: SpectralField, params: FluidParams) -> SpectralField:
    """Momentum right-hand side d_t m (m = rho u / rho*) straight from the (rho, u) equations."""
    fn = _Fine(rho.grid)
    rho_f = fn.phys(fn.pad.pad(rho.coeffs))
    u_f = fn.phys(fn.pad.pad(u.coeffs))
    return SpectralField(rho.grid, fn.finish(_momentum_rhs_fine(fn, rho_f, u_f, params)))


def oracle_from_state(state: FluidState, params: FluidParams) -> SpectralField:
    """Oracle momentum RHS with rho and u = m / (1 + a) formed directly on the padded grid."""
    fn = _Fine(state.grid)
    a = fn.phys(fn.pad.pad(state.a.coeffs))
    m = fn.phys(fn.pad.pad(state.m.coeffs))
    rho = params.rho_star * (1.0 + a)
    return SpectralField(state.grid, fn.finish(_momentum_rhs_fine(fn, rho, m / (1.0 + a), params)))


def oracle_g(state: FluidState, params: FluidParams) -> SpectralField:
    """Oracle RHS minus the linear part: the nonlinear forcing assembled the other way."""
    full = oracle_from_state(state, params)
    lin = linear_operator(state.grid, params, state.stacked())[1:] * state.grid.dealias_mask
    return SpectralField(state.grid, full.coeffs - lin)


def effective_velocity(state: FluidState, alpha: float) -> SpectralField:
    """w = Q m + alpha grad a."""
    g = state.grid
    xh = g.xi_hat
    qm = xh * np.sum(xh * state.m.coeffs, axis=0)
    return SpectralField(g, qm + alpha * 1j * g.xi * state.a.coeffs)


def recover_grad_a(w: SpectralField, m: SpectralField, alpha: float) -> SpectralField:
    """grad a = (w - Q m) / alpha."""
    g = w.grid
    xh = g.xi_hat
    qm = xh * np.sum(xh * m.coeffs, axis=0)
    return SpectralField(g, (w.coeffs - qm) / alpha)
