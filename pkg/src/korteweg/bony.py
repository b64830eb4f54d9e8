"""Paraproduct and remainder on a filter bank.

Low cutoffs are formed as the mean plus a cumulative sum of blocks, so
T_f g + T_g f + R(f, g) reproduces the padded product f g to roundoff.  The
homogeneous decomposition has no slot for the mean of f times the mean of g;
that constant is carried by the remainder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fourier import Padder, SpectralField, high_band_fraction, inverse
from .littlewood_paley import DyadicFilterBank

ALIAS_TOL = 1e-10


class UnderResolvedInput(ValueError):
    pass


def _mean_only(f: SpectralField) -> np.ndarray:
    out = np.zeros_like(f.coeffs)
    out[(Ellipsis,) + (0,) * f.grid.dim] = f.coeffs[(Ellipsis,) + (0,) * f.grid.dim]
    return out


class _BlockCache:
    """Fine-grid physical values of the blocks of one field and of their running sums."""

    def __init__(self, f: SpectralField, bank: DyadicFilterBank, pad: Padder):
        self.blocks = [pad.to_fine_physical(mult * f.coeffs) for mult in bank.phi_j]
        mean = pad.to_fine_physical(_mean_only(f))
        # low[i] = mean + sum of blocks strictly below block i - 1, i.e. S_{j-1}
        low = []
        acc = mean.copy()
        prev = None
        for blk in self.blocks:
            low.append(acc.copy())
            if prev is not None:
                acc = acc + prev
            prev = blk
        self.low = low
        self.mean = mean


def _validate(f: SpectralField, g: SpectralField, bank: DyadicFilterBank):
    if f.grid != g.grid or f.grid != bank.grid:
        raise ValueError("fields and bank must share one grid")
    if f.is_vector or g.is_vector:
        raise ValueError("paraproducts act on scalar fields")
    for h in (f, g):
        frac = high_band_fraction(h)
        if frac > ALIAS_TOL:
            raise UnderResolvedInput(f"input has {frac:.3e} of its energy outside the dealiased band")


def _finish(values: np.ndarray, pad: Padder, grid) -> SpectralField:
    return SpectralField(grid, pad.truncate(pad.fine_forward(values)))


def _para(fc: _BlockCache, gc: _BlockCache) -> np.ndarray:
    out = np.zeros_like(fc.mean)
    for low_f, blk_g in zip(fc.low, gc.blocks):
        out += low_f * blk_g
    return out


def _rem(fc: _BlockCache, gc: _BlockCache) -> np.ndarray:
    out = fc.mean * gc.mean
    n = len(fc.blocks)
    for i in range(n):
        wide = fc.blocks[i]
        if i > 0:
            wide = wide + fc.blocks[i - 1]
        if i + 1 < n:
            wide = wide + fc.blocks[i + 1]
        out += wide * gc.blocks[i]
    return out


def paraproduct(f: SpectralField, g: SpectralField, bank: DyadicFilterBank) -> SpectralField:
    """T_f g = sum_j S_{j-1} f * Delta_j g."""
    _validate(f, g, bank)
    pad = Padder(f.grid, 2)
    return _finish(_para(_BlockCache(f, bank, pad), _BlockCache(g, bank, pad)), pad, f.grid)


def remainder(f: SpectralField, g: SpectralField, bank: DyadicFilterBank) -> SpectralField:
    """R(f, g) = sum_j (Delta_{j-1} + Delta_j + Delta_{j+1}) f * Delta_j g, plus mean(f) mean(g)."""
    _validate(f, g, bank)
    pad = Padder(f.grid, 2)
    return _finish(_rem(_BlockCache(f, bank, pad), _BlockCache(g, bank, pad)), pad, f.grid)


@dataclass(frozen=True)
class BonyTerms:
    t_fg: SpectralField
    t_gf: SpectralField
    rem: SpectralField
    product: SpectralField

    @property
    def defect(self) -> float:
        """max |T_f g + T_g f + R - f g| in physical space, relative to max |f g|."""
        diff = (self.t_fg + self.t_gf + self.rem - self.product).to_physical()
        scale = float(np.max(np.abs(self.product.to_physical())))
        return float(np.max(np.abs(diff))) / (scale if scale > 0 else 1.0)


def bony_terms(f: SpectralField, g: SpectralField, bank: DyadicFilterBank) -> BonyTerms:
    """All three pieces plus the padded product, sharing one set of block transforms."""
    _validate(f, g, bank)
    pad = Padder(f.grid, 2)
    fc, gc = _BlockCache(f, bank, pad), _BlockCache(g, bank, pad)
    prod = inverse(pad.fine, pad.pad(f.coeffs)) * inverse(pad.fine, pad.pad(g.coeffs))
    return BonyTerms(
        t_fg=_finish(_para(fc, gc), pad, f.grid),
        t_gf=_finish(_para(gc, fc), pad, f.grid),
        rem=_finish(_rem(fc, gc), pad, f.grid),
        product=_finish(prod, pad, f.grid),
    )
