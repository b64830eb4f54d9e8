"""Dyadic decomposition and Besov-type norms on the torus.

The radial cutoff chi equals 1 on |xi| <= 3/4, vanishes for |xi| >= 4/3 and is
glued in between by the exp(-1/x) smooth step.  Blocks are
phi(2^-j xi) = chi(2^-(j+1) xi) - chi(2^-j xi).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .fourier import SpectralField, TorusGrid, inverse, lp_norm_samples

log = logging.getLogger(__name__)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

CHI_INNER = 0.75
CHI_OUTER = 4.0 / 3.0
PHI_INNER = CHI_INNER
PHI_OUTER = 2.0 * CHI_OUTER


def _glue(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def chi(r: np.ndarray) -> np.ndarray:
    """Smooth radial cutoff evaluated at radii r >= 0."""
    r = np.asarray(r, dtype=float)
    x = (r - CHI_INNER) / (CHI_OUTER - CHI_INNER)
    x = np.clip(x, 0.0, 1.0)
    up, down = _glue(1.0 - x), _glue(x)
    return up / (up + down)


def phi(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return chi(r / 2.0) - chi(r)


class DyadicFilterBank:
    """Sampled chi/phi cutoffs over every dyadic block that touches the lattice.

    The bank covers j_min..j_max; block j_min - 1 and below vanish on every
    nonzero lattice point, so low_cutoff at the bottom of the range reduces to
    the mean, and partition of unity holds on all nonzero modes.
    """

    def __init__(self, grid: TorusGrid, j0: int = 0, tol: float = 1e-10):
        self.grid = grid
        self.j0 = int(j0)
        radius = grid.xi_norm
        live = (radius > 0) & ~grid.nyquist
        r_min = float(radius[live].min())
        r_max = float(radius[live].max())
        self.j_min = math.floor(math.log2(r_min / PHI_OUTER)) + 1
        self.j_max = math.ceil(math.log2(r_max / PHI_INNER)) - 1
        self.js = np.arange(self.j_min, self.j_max + 1)
        self.phi_j = np.stack([phi(radius / 2.0**j) for j in self.js])
        self.phi_j[:, ~live] = 0.0
        self._live = live
        total = self.phi_j.sum(axis=0)
        lo = 2.0**self.j_min * CHI_OUTER
        hi = 2.0**self.j_max * CHI_INNER
        self.certified = live & (radius >= lo) & (radius <= hi)
        self.certified_defect = float(np.max(np.abs(total[self.certified] - 1.0), initial=0.0))
        self.lattice_defect = float(np.max(np.abs(total[live] - 1.0), initial=0.0))
        if self.certified_defect > tol:
            raise ValueError(f"partition-of-unity defect {self.certified_defect:.3e} exceeds {tol}")

    @property
    def n_blocks(self) -> int:
        return len(self.js)

    def _slot(self, j: int) -> int:
        if not self.j_min <= j <= self.j_max:
            raise ValueError(f"block {j} outside bank range [{self.j_min}, {self.j_max}]")
        return int(j - self.j_min)

    def block_multiplier(self, j: int) -> np.ndarray:
        return self.phi_j[self._slot(j)]

    def low_multiplier(self, j: int) -> np.ndarray:
        """chi(2^-j xi); allowed for j_min - 1 <= j <= j_max + 1."""
        if not self.j_min - 1 <= j <= self.j_max + 1:
            raise ValueError(f"cutoff {j} outside [{self.j_min - 1}, {self.j_max + 1}]")
        out = chi(self.grid.xi_norm / 2.0**j)
        out[self.grid.nyquist] = 0.0
        return out

    def out_of_range_fraction(self, f: SpectralField) -> float:
        """Energy of nonzero modes not accounted for by the bank."""
        energy = np.abs(f.coeffs) ** 2
        if f.is_vector:
            energy = energy.sum(axis=0)
        live = energy * self._live
        total = float(live.sum())
        if total == 0.0:
            return 0.0
        missing = (1.0 - self.phi_j.sum(axis=0)) ** 2
        return float((live * missing).sum()) / total


def build_filter_bank(grid: TorusGrid, j0: int = 0) -> DyadicFilterBank:
    return DyadicFilterBank(grid, j0)


def dyadic_block(f: SpectralField, j: int, bank: DyadicFilterBank) -> SpectralField:
    return SpectralField(f.grid, bank.block_multiplier(j) * f.coeffs)


def low_cutoff(f: SpectralField, j: int, bank: DyadicFilterBank) -> SpectralField:
    return SpectralField(f.grid, bank.low_multiplier(j) * f.coeffs)


def lp_norm(f: SpectralField, p: float) -> float:
    return lp_norm_samples(f.to_physical(), f.grid, p)


@dataclass(frozen=True)
class NormSpec:
    s: float
    p: float
    r: float

    def __post_init__(self):
        if self.p < 1 or self.r < 1:
            raise ValueError(f"exponents must be >= 1, got p={self.p}, r={self.r}")


@dataclass(frozen=True)
class HybridNormSpec:
    high: NormSpec
    low: NormSpec
    j0: Optional[int] = None


@dataclass(frozen=True)
class CheminLernerSpec:
    norm: Union[NormSpec, HybridNormSpec]
    theta: float
    horizon: Optional[float] = None

    def __post_init__(self):
        if self.theta < 1:
            raise ValueError(f"time exponent must be >= 1, got {self.theta}")
        if self.horizon is not None and not self.horizon > 0:
            raise ValueError("horizon must be positive")


def block_norms(f: SpectralField, bank: DyadicFilterBank, p: float) -> np.ndarray:
    """||Delta_j f||_{L^p} for every block in the bank."""
    g = f.grid
    if f.grid != bank.grid:
        raise ValueError("field and filter bank live on different grids")
    if p == 2:
        energy = np.abs(f.coeffs) ** 2
        if f.is_vector:
            energy = energy.sum(axis=0)
        flat = bank.phi_j.reshape(bank.n_blocks, -1) ** 2 @ energy.reshape(-1)
        return np.sqrt(g.period**g.dim * flat)
    out = np.empty(bank.n_blocks)
    for i, mult in enumerate(bank.phi_j):
        out[i] = lp_norm_samples(inverse(g, mult * f.coeffs), g, p)
    return out


def _lr(values: np.ndarray, r: float) -> float:
    if values.size == 0:
        return 0.0
    if math.isinf(r):
        return float(np.max(values))
    return float(np.sum(values**r) ** (1.0 / r))


def _weights(js: np.ndarray, s: float) -> np.ndarray:
    return np.exp2(s * js.astype(float))


def _check_resolved(f: SpectralField, bank: DyadicFilterBank, tol: float = 1e-12) -> bool:
    frac = bank.out_of_range_fraction(f)
    if frac > tol:
        log.warning("field under-resolved: %.3e of energy outside the dyadic range", frac)
        return False
    return True


def besov_norm(f: SpectralField, spec: NormSpec, bank: DyadicFilterBank) -> float:
    _check_resolved(f, bank)
    blocks = block_norms(f, bank, spec.p)
    return _lr(_weights(bank.js, spec.s) * blocks, spec.r)


def _split(bank: DyadicFilterBank, spec: HybridNormSpec) -> np.ndarray:
    j0 = bank.j0 if spec.j0 is None else spec.j0
    return bank.js >= j0


def hybrid_norm(f: SpectralField, spec: HybridNormSpec, bank: DyadicFilterBank) -> float:
    _check_resolved(f, bank)
    high = _split(bank, spec)
    hb = block_norms(f, bank, spec.high.p)
    lb = hb if spec.low.p == spec.high.p else block_norms(f, bank, spec.low.p)
    hv = (_weights(bank.js, spec.high.s) * hb)[high]
    lv = (_weights(bank.js, spec.low.s) * lb)[~high]
    return _lr(hv, spec.high.r) + _lr(lv, spec.low.r)


def _time_norm(series: np.ndarray, times: np.ndarray, theta: float) -> np.ndarray:
    """Column-wise L^theta in time; trapezoid rule, max for theta = inf."""
    if math.isinf(theta):
        return series.max(axis=0)
    return _trapezoid(series**theta, times, axis=0) ** (1.0 / theta)


def _restrict(times: np.ndarray, horizon: Optional[float]) -> np.ndarray:
    if horizon is None:
        return np.ones(len(times), dtype=bool)
    return times <= horizon * (1 + 1e-12)


def chemin_lerner_norm(times: Sequence[float], fields: Sequence[SpectralField],
                       spec: CheminLernerSpec, bank: DyadicFilterBank) -> float:
    """Per-block time norm first, then the (hybrid) Besov sum over blocks."""
    t = np.asarray(times, dtype=float)
    if len(t) < 2:
        raise ValueError("need at least two snapshots")
    if np.any(np.diff(t) <= 0):
        raise ValueError("snapshot times must be strictly increasing")
    keep = _restrict(t, spec.horizon)
    t = t[keep]
    fields = [f for f, k in zip(fields, keep) if k]
    norm = spec.norm
    if isinstance(norm, NormSpec):
        blocks = np.stack([block_norms(f, bank, norm.p) for f in fields])
        per_block = _time_norm(blocks, t, spec.theta)
        return _lr(_weights(bank.js, norm.s) * per_block, norm.r)
    return _hybrid_time_norm(t, fields, norm, spec.theta, bank)


def _hybrid_time_norm(t: np.ndarray, fields: Sequence[SpectralField], norm: HybridNormSpec,
                      theta: float, bank: DyadicFilterBank) -> float:
    high = _split(bank, norm)
    hb = np.stack([block_norms(f, bank, norm.high.p) for f in fields])
    lb = hb if norm.low.p == norm.high.p else np.stack([block_norms(f, bank, norm.low.p) for f in fields])
    hv = (_weights(bank.js, norm.high.s) * _time_norm(hb, t, theta))[high]
    lv = (_weights(bank.js, norm.low.s) * _time_norm(lb, t, theta))[~high]
    return _lr(hv, norm.high.r) + _lr(lv, norm.low.r)


def epq_specs(dim: int, p: float, q: float, j0: Optional[int] = None) -> tuple[HybridNormSpec, HybridNormSpec]:
    """The two hybrid spaces of the solution norm: L-inf-in-time and L1-in-time parts."""
    sup_part = HybridNormSpec(NormSpec(dim / p - 1, p, 1), NormSpec(dim / q - 3, q, math.inf), j0)
    int_part = HybridNormSpec(NormSpec(dim / p + 1, p, 1), NormSpec(dim / q - 1, q, math.inf), j0)
    return sup_part, int_part


def epq_norm(times: Sequence[float], grad_a: Sequence[SpectralField], m: Sequence[SpectralField],
             p: float, q: float, bank: DyadicFilterBank, horizon: Optional[float] = None,
             j0: Optional[int] = None) -> float:
    """||(grad a, m)|| in L~inf_T(B^{d/p-1, d/q-3}) + L~1_T(B^{d/p+1, d/q-1})."""
    sup_part, int_part = epq_specs(bank.grid.dim, p, q, j0)
    total = 0.0
    for fields in (grad_a, m):
        total += chemin_lerner_norm(times, fields, CheminLernerSpec(sup_part, math.inf, horizon), bank)
        total += chemin_lerner_norm(times, fields, CheminLernerSpec(int_part, 1.0, horizon), bank)
    return total


def epq_norm_states(times: Sequence[float], states: Sequence, p: float, q: float,
                    bank: DyadicFilterBank, horizon: Optional[float] = None,
                    j0: Optional[int] = None) -> float:
    """epq_norm on FluidState snapshots (anything with .a and .m spectral fields)."""
    grads = [SpectralField(s.a.grid, 1j * s.a.grid.xi * s.a.coeffs) for s in states]
    return epq_norm(times, grads, [s.m for s in states], p, q, bank, horizon, j0)


def norm_row(time: float, norm_id: str, f: SpectralField, spec: NormSpec,
             bank: DyadicFilterBank) -> list:
    """CSV row (time, norm_id, weighted block values..., total)."""
    blocks = _weights(bank.js, spec.s) * block_norms(f, bank, spec.p)
    return [time, norm_id, *blocks.tolist(), _lr(blocks, spec.r)]
