import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from korteweg.fourier import (
    DEFAULT_PERIOD,
    Padder,
    SpectralField,
    SymbolSpec,
    apply_symbol,
    div,
    grad,
    high_band_fraction,
    leray_split,
    lp_norm_samples,
    make_grid,
)

from conftest import random_field


def test_default_period_and_spacing():
    g = make_grid(2, 64)
    assert g.period == pytest.approx(2 * math.pi * 8)
    assert g.dk == pytest.approx(1 / 8)
    assert g.shape == (64, 64)


def test_non_power_of_two_rejected_unless_relaxed():
    with pytest.raises(ValueError):
        make_grid(2, 48)
    assert make_grid(2, 48, require_pow2=False).n == 48


def test_single_mode_amplitude_and_roundtrip():
    g = make_grid(1, 16, 2 * np.pi)
    x = g.points()[0]
    f = SpectralField.from_physical(g, 3.0 * np.cos(2 * x))
    assert f.coeffs[2] == pytest.approx(1.5)
    assert f.coeffs[-2] == pytest.approx(1.5)
    assert np.allclose(f.to_physical(), 3.0 * np.cos(2 * x))


def test_nyquist_rows_are_zeroed():
    g = make_grid(2, 16, 2 * np.pi)
    x = g.points()
    f = SpectralField.from_physical(g, np.cos(8 * x[0]) + np.sin(x[1]))
    assert np.all(f.coeffs[g.nyquist] == 0)
    assert abs(f.coeffs[g.index_of((0, 1))]) == pytest.approx(0.5)


def test_dealias_mask_keeps_two_thirds():
    g = make_grid(1, 48, require_pow2=False)
    kept = np.abs(g.k_int[0][g.dealias_mask])
    assert kept.max() == 16


@given(st.integers(0, 2**31 - 1))
def test_hermitian_symmetry_of_real_fields(seed):
    g = make_grid(2, 16)
    f = random_field(g, np.random.default_rng(seed), mask=False)
    assert f.hermitian_defect() < 1e-14


def test_symbols(grid2):
    x = grid2.points()
    f = SpectralField.from_physical(grid2, np.sin(2 * x[0]) * np.cos(3 * x[1]))
    lap = apply_symbol(f, SymbolSpec("laplacian")).to_physical()
    assert np.allclose(lap, -13 * f.to_physical())
    g = apply_symbol(f, SymbolSpec("gradient")).to_physical()
    assert np.allclose(g[0], 2 * np.cos(2 * x[0]) * np.cos(3 * x[1]))
    dv = apply_symbol(apply_symbol(f, SymbolSpec("gradient")), SymbolSpec("divergence"))
    assert np.allclose(dv.coeffs, apply_symbol(f, SymbolSpec("laplacian")).coeffs)
    l1 = apply_symbol(f, SymbolSpec("lambda1")).to_physical()
    assert np.allclose(l1, 5 * f.to_physical())
    lam = apply_symbol(f, SymbolSpec("lambda")).to_physical()
    assert np.allclose(lam, math.sqrt(13) * f.to_physical())
    with pytest.raises(ValueError):
        SymbolSpec("custom")
    with pytest.raises(ValueError):
        apply_symbol(f, SymbolSpec("divergence"))


@given(st.integers(0, 2**31 - 1))
def test_leray_split_orthogonal_and_divergence_free(seed):
    g = make_grid(3, 8, 2 * np.pi)
    m = random_field(g, np.random.default_rng(seed), components=3, mask=False)
    pm, qm = leray_split(m)
    assert np.allclose((pm + qm).coeffs, m.coeffs)
    assert np.max(np.abs(div(g, pm.coeffs))) < 1e-13
    curl_free = grad(g, np.sum(g.xi_hat * qm.coeffs, axis=0) / np.where(g.xi_norm > 0, 1j * g.xi_norm, 1.0))
    assert np.allclose(np.where(g.xi_norm > 0, curl_free, 0), np.where(g.xi_norm > 0, qm.coeffs, 0))
    pp, pq = leray_split(pm)
    assert np.allclose(pq.coeffs, 0, atol=1e-14)


def test_lp_norm_of_constant():
    g = make_grid(2, 16, 4.0)
    assert lp_norm_samples(np.full(g.shape, 2.0), g, 2) == pytest.approx(2 * 4.0)
    assert lp_norm_samples(np.full(g.shape, 2.0), g, math.inf) == 2.0


def test_padded_product_is_exact_for_band_limited_inputs(rng):
    g = make_grid(2, 32, 2 * np.pi)
    f = random_field(g, rng)
    h = random_field(g, rng)
    pad = Padder(g)
    prod = pad.product(f.coeffs, h.coeffs)
    # direct convolution oracle on the lattice
    k = g.k_int.reshape(2, -1).T
    fc, hc = f.coeffs.reshape(-1), h.coeffs.reshape(-1)
    nz_f, nz_h = np.nonzero(fc)[0], np.nonzero(hc)[0]
    out = np.zeros(g.shape, complex)
    for i in nz_f:
        s = k[i] + k[nz_h]
        ok = np.all(np.abs(s) < g.n // 2, axis=1)
        np.add.at(out, (s[ok, 0] % g.n, s[ok, 1] % g.n), fc[i] * hc[nz_h[ok]])
    out[g.nyquist] = 0
    assert np.max(np.abs(prod - out)) < 1e-14


def test_high_band_fraction(rng):
    g = make_grid(2, 32)
    assert high_band_fraction(random_field(g, rng)) == 0.0
    assert high_band_fraction(random_field(g, rng, mask=False)) > 0.2


def test_shape_mismatch_rejected():
    g = make_grid(2, 16)
    with pytest.raises(ValueError):
        SpectralField(g, np.zeros((3, 16, 16)))
    with pytest.raises(ValueError):
        SpectralField(g, np.zeros(g.shape)) + SpectralField(make_grid(2, 32), np.zeros((32, 32)))
