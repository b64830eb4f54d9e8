"""Fluid parameters: reference density, polynomial closures and the scaled constants."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial

P_PRIME_TOL = 1e-10


def _poly(coeffs: Sequence[float] | Polynomial) -> Polynomial:
    if isinstance(coeffs, Polynomial):
        return coeffs
    return Polynomial(np.asarray(coeffs, dtype=float))


@dataclass(frozen=True)
class FluidParams:
    """Closures are polynomials in the density excess x = rho - rho_star.

    Fields:
        rho_star: reference density.
        pressure: P as a polynomial in x; its linear coefficient must vanish.
        shear: mu(rho), bulk: lambda(rho), capillarity: kappa(rho).
    """

    rho_star: float
    pressure: Polynomial
    shear: Polynomial
    bulk: Polynomial
    capillarity: Polynomial

    def __post_init__(self):
        for name in ("pressure", "shear", "bulk", "capillarity"):
            object.__setattr__(self, name, _poly(getattr(self, name)))
        if not self.rho_star > 0:
            raise ValueError(f"rho_star must be positive, got {self.rho_star}")
        slope = float(self.pressure.deriv()(0.0))
        if abs(slope) >= P_PRIME_TOL:
            raise ValueError(f"zero sound speed requires P'(rho*) = 0, got {slope:.3e}")
        if not self.mu_bar > 0:
            raise ValueError(f"shear viscosity mu_bar must be positive, got {self.mu_bar}")
        if not self.nu_bar > 0:
            raise ValueError(f"nu_bar = 2 mu_bar + lambda_bar must be positive, got {self.nu_bar}")
        if not self.kappa_bar > 0:
            raise ValueError(f"capillarity kappa_bar must be positive, got {self.kappa_bar}")

    @classmethod
    def constant(cls, mu_bar: float, lambda_bar: float, kappa_bar: float,
                 rho_star: float = 1.0, pressure_curvature: float = 1.0,
                 p0: float = 0.0) -> "FluidParams":
        """Default family: P = P0 + c x^2, constant viscosities, kappa = kappa_bar / rho*."""
        return cls(
            rho_star=rho_star,
            pressure=Polynomial([p0, 0.0, pressure_curvature]),
            shear=Polynomial([mu_bar * rho_star]),
            bulk=Polynomial([lambda_bar * rho_star]),
            capillarity=Polynomial([kappa_bar / rho_star]),
        )

    @classmethod
    def from_nu_kappa(cls, nu_bar: float, kappa_bar: float, mu_bar: float = 1.0,
                      **kw) -> "FluidParams":
        return cls.constant(mu_bar, nu_bar - 2.0 * mu_bar, kappa_bar, **kw)

    @property
    def mu_bar(self) -> float:
        return float(self.shear(0.0)) / self.rho_star

    @property
    def lambda_bar(self) -> float:
        return float(self.bulk(0.0)) / self.rho_star

    @property
    def nu_bar(self) -> float:
        return 2.0 * self.mu_bar + self.lambda_bar

    @property
    def kappa_bar(self) -> float:
        return float(self.capillarity(0.0)) * self.rho_star

    @property
    def kappa_check(self) -> float:
        return float(self.capillarity(0.0)) + self.rho_star * float(self.capillarity.deriv()(0.0))

    @property
    def discriminant(self) -> float:
        return discriminant(self.nu_bar, self.kappa_bar)

    def with_pressure_scale(self, factor: float) -> "FluidParams":
        return replace(self, pressure=self.pressure * factor)

    def without_pressure(self) -> "FluidParams":
        return replace(self, pressure=Polynomial([0.0]))


def _two_product(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dekker/Veltkamp error-free product: a*b = p + e exactly."""
    split = 134217729.0
    p = a * b
    ca, cb = split * a, split * b
    ah = ca - (ca - a)
    bh = cb - (cb - b)
    al, bl = a - ah, b - bh
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def discriminant(nu_bar, kappa_bar):
    """nu^2 - 4 kappa without cancellation error near the critical parabola."""
    nu = np.asarray(nu_bar, dtype=float)
    ka = np.asarray(kappa_bar, dtype=float)
    p, e = _two_product(nu, nu)
    out = (p - 4.0 * ka) + e
    return float(out) if out.ndim == 0 else out
