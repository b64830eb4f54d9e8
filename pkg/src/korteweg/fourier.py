"""Periodic grids, spectral fields, Fourier symbols and the Leray split.

Coefficients are amplitudes: the forward transform carries the 1/N^d factor,
so a field is reconstructed as f(x) = sum_k f_hat(k) exp(i xi_k . x) and
Parseval reads ||f||_{L^2}^2 = L^d sum_k |f_hat(k)|^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

DEFAULT_PERIOD = 2.0 * math.pi * 8.0


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the torus [0, L)^d with n points per axis."""

    dim: int
    n: int
    period: float = DEFAULT_PERIOD

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n_per_axis must be an even integer >= 8, got {self.n}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def dx(self) -> float:
        return self.period / self.n

    @property
    def dk(self) -> float:
        return 2.0 * math.pi / self.period

    @property
    def cell_volume(self) -> float:
        return self.dx**self.dim

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers along one axis in FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(np.int64)

    @cached_property
    def k_int(self) -> np.ndarray:
        """Integer lattice coordinates, shape (d,) + grid shape."""
        return np.stack(np.meshgrid(*([self.wavenumbers] * self.dim), indexing="ij"))

    @cached_property
    def xi(self) -> np.ndarray:
        """Physical frequencies (2 pi / L) k, shape (d,) + grid shape."""
        return self.dk * self.k_int.astype(float)

    @cached_property
    def xi_sq(self) -> np.ndarray:
        return np.sum(self.xi**2, axis=0)

    @cached_property
    def xi_norm(self) -> np.ndarray:
        return np.sqrt(self.xi_sq)

    @cached_property
    def xi_l1(self) -> np.ndarray:
        return np.sum(np.abs(self.xi), axis=0)

    @cached_property
    def k_l1(self) -> np.ndarray:
        return np.sum(np.abs(self.k_int), axis=0)

    @cached_property
    def nyquist(self) -> np.ndarray:
        """True where any axis index sits on the Nyquist row."""
        return np.any(self.k_int == -(self.n // 2), axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep |k_i| <= n // 3 on every axis."""
        return np.all(np.abs(self.k_int) <= self.n // 3, axis=0)

    @cached_property
    def xi_hat(self) -> np.ndarray:
        """Unit frequency direction, zero at the origin."""
        norm = self.xi_norm
        safe = np.where(norm > 0, norm, 1.0)
        return np.where(norm > 0, self.xi / safe, 0.0)

    def points(self) -> np.ndarray:
        """Physical sample coordinates, shape (d,) + grid shape."""
        x = np.arange(self.n) * self.dx
        return np.stack(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def padded(self, factor: int = 2) -> "TorusGrid":
        return TorusGrid(self.dim, self.n * factor, self.period)

    def scaled(self, factor: float) -> "TorusGrid":
        """Same number of points on the torus of period L / factor."""
        return TorusGrid(self.dim, self.n, self.period / factor)

    def index_of(self, k: tuple[int, ...]) -> tuple[int, ...]:
        """Array index of the integer lattice point k."""
        return tuple(int(ki) % self.n for ki in k)


def make_grid(dim: int, n_per_axis: int, period: float = DEFAULT_PERIOD,
              *, require_pow2: bool = True) -> TorusGrid:
    """Build a grid; sizes must be powers of two unless explicitly relaxed."""
    if require_pow2 and not _is_power_of_two(n_per_axis):
        raise ValueError(f"n_per_axis must be a power of two, got {n_per_axis}")
    return TorusGrid(dim, n_per_axis, float(period))


def forward(grid: TorusGrid, samples: np.ndarray) -> np.ndarray:
    """Physical samples -> amplitude coefficients with Nyquist rows zeroed."""
    samples = np.asarray(samples)
    if samples.shape[-grid.dim:] != grid.shape:
        raise ValueError(f"sample shape {samples.shape} does not match grid {grid.shape}")
    coeffs = sfft.fftn(samples, axes=grid.axes) / grid.size
    coeffs[..., grid.nyquist] = 0.0
    return coeffs


def inverse(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Amplitude coefficients -> real physical samples."""
    return sfft.ifftn(coeffs * grid.size, axes=grid.axes).real


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real scalar or d-vector field."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self):
        shape = self.coeffs.shape
        ok = shape == self.grid.shape or shape == (self.grid.dim,) + self.grid.shape
        if not ok:
            raise ValueError(f"coefficient shape {shape} incompatible with grid {self.grid.shape}")

    @classmethod
    def from_physical(cls, grid: TorusGrid, samples: np.ndarray) -> "SpectralField":
        return cls(grid, forward(grid, samples))

    @classmethod
    def zeros(cls, grid: TorusGrid, components: Optional[int] = None) -> "SpectralField":
        """Scalar zeros by default; an integer asks for a vector with that many components."""
        shape = grid.shape if components is None else (components,) + grid.shape
        return cls(grid, np.zeros(shape, dtype=complex))

    @property
    def is_vector(self) -> bool:
        return self.coeffs.ndim == self.grid.dim + 1

    @property
    def component_count(self) -> int:
        return self.grid.dim if self.is_vector else 1

    def to_physical(self) -> np.ndarray:
        return inverse(self.grid, self.coeffs)

    def hermitian_defect(self) -> float:
        """Max relative mismatch between f_hat(-xi) and conj(f_hat(xi))."""
        c = self.coeffs
        flipped = c
        for ax in self.grid.axes:
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        scale = max(float(np.max(np.abs(c))), 1e-300)
        return float(np.max(np.abs(flipped - np.conj(c)))) / scale

    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise ValueError("grid mismatch")

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def component(self, i: int) -> "SpectralField":
        if not self.is_vector:
            raise ValueError("scalar field has no components")
        return SpectralField(self.grid, self.coeffs[i])


@dataclass(frozen=True)
class SymbolSpec:
    """A Fourier multiplier: lambda, lambda1, gradient, divergence, laplacian or custom."""

    kind: str
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None

    KINDS = ("lambda", "lambda1", "gradient", "divergence", "laplacian", "custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown symbol kind {self.kind!r}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom symbol needs a function of xi")


def apply_symbol(f: SpectralField, s: SymbolSpec) -> SpectralField:
    g = f.grid
    c = f.coeffs
    if s.kind == "gradient":
        if f.is_vector:
            raise ValueError("gradient expects a scalar field")
        return SpectralField(g, 1j * g.xi * c)
    if s.kind == "divergence":
        if not f.is_vector:
            raise ValueError("divergence expects a vector field")
        return SpectralField(g, np.sum(1j * g.xi * c, axis=0))
    if s.kind == "lambda":
        mult = g.xi_norm
    elif s.kind == "lambda1":
        mult = g.xi_l1
    elif s.kind == "laplacian":
        mult = -g.xi_sq
    else:
        mult = np.asarray(s.func(g.xi))
    return SpectralField(g, mult * c)


def leray_split(m: SpectralField) -> tuple[SpectralField, SpectralField]:
    """Return (Pm, Qm); at xi = 0 the mode stays in Pm."""
    if not m.is_vector:
        raise ValueError("leray_split expects a vector field")
    qm = longitudinal(m.grid, m.coeffs)
    return SpectralField(m.grid, m.coeffs - qm), SpectralField(m.grid, qm)


def longitudinal(grid: TorusGrid, coeffs: np.ndarray) -> np.ndarray:
    """Raw-array Q projector: (xi xi^T / |xi|^2) m_hat."""
    xh = grid.xi_hat
    return xh * np.sum(xh * coeffs, axis=0)


def grad(grid: TorusGrid, c: np.ndarray) -> np.ndarray:
    return 1j * grid.xi * c


def div(grid: TorusGrid, c: np.ndarray) -> np.ndarray:
    return np.sum(1j * grid.xi * c, axis=0)


def lp_norm_samples(values: np.ndarray, grid: TorusGrid, p: float) -> float:
    """Unnormalized quadrature of (int |f|^p)^(1/p); vectors use the pointwise Euclidean size."""
    mag = np.abs(values)
    if values.ndim == grid.dim + 1:
        mag = np.sqrt(np.sum(mag**2, axis=0))
    if math.isinf(p):
        return float(np.max(mag))
    return float((grid.cell_volume * np.sum(mag**p)) ** (1.0 / p))


def high_band_fraction(f: SpectralField) -> float:
    """Energy fraction outside the 2/3-rule band (0 for a dealiased field)."""
    energy = np.abs(f.coeffs) ** 2
    if f.is_vector:
        energy = energy.sum(axis=0)
    total = float(energy.sum())
    if total == 0.0:
        return 0.0
    return float(energy[~f.grid.dealias_mask].sum()) / total


class Padder:
    """Moves coefficients between a grid and its zero-padded refinement.

    Products are formed pointwise on the fine grid; with factor 2 any triple
    product of fields supported in |k_i| < n/2 is alias-free there.
    """

    def __init__(self, grid: TorusGrid, factor: int = 2):
        self.coarse = grid
        self.fine = grid.padded(factor)
        idx = grid.wavenumbers % self.fine.n
        self._index = np.ix_(*([idx] * grid.dim))

    def pad(self, coeffs: np.ndarray) -> np.ndarray:
        lead = coeffs.shape[: coeffs.ndim - self.coarse.dim]
        out = np.zeros(lead + self.fine.shape, dtype=complex)
        out[(Ellipsis,) + self._index] = coeffs
        return out

    def truncate(self, fine_coeffs: np.ndarray) -> np.ndarray:
        out = fine_coeffs[(Ellipsis,) + self._index].copy()
        out[..., self.coarse.nyquist] = 0.0
        return out

    def to_fine_physical(self, coeffs: np.ndarray) -> np.ndarray:
        return inverse(self.fine, self.pad(coeffs))

    def fine_forward(self, values: np.ndarray) -> np.ndarray:
        """Physical fine samples -> fine coefficients (no Nyquist zeroing needed later)."""
        return sfft.fftn(values, axes=self.fine.axes) / self.fine.size

    def product(self, *coeffs: np.ndarray) -> np.ndarray:
        """Coefficients of the pointwise product, truncated back to the coarse grid."""
        values = self.to_fine_physical(coeffs[0])
        for c in coeffs[1:]:
            values = values * self.to_fine_physical(c)
        return self.truncate(self.fine_forward(values))
