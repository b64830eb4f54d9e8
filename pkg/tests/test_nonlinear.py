import numpy as np
import pytest
from hypothesis import given, strategies as st

from korteweg.fourier import SpectralField, make_grid
from korteweg.linear import FluidState
from korteweg.nonlinear import (
    DensityGuardError,
    UnderResolvedError,
    build_closures,
    evaluate_g,
    g_gradient_part6,
    oracle_g,
    recover_grad_a,
    effective_velocity,
)
from korteweg.params import FluidParams

from conftest import random_field

PARAMS = FluidParams(rho_star=1.3, pressure=[0.2, 0, 1.1, 0.4], shear=[1.0, 0.3, 0.1],
                     bulk=[0.5, -0.2], capillarity=[2.0, 0.5, 0.2])
CLOSURES = build_closures(PARAMS)
GRID = make_grid(2, 32, 2 * np.pi)


def low_mode_state(seed, amp=0.25, kmax=3, grid=GRID):
    rng = np.random.default_rng(seed)
    keep = np.all(np.abs(grid.k_int) <= kmax, axis=0)

    def field(components=None):
        f = random_field(grid, rng, components=components, mask=False)
        c = f.coeffs * keep
        v = SpectralField(grid, c).to_physical()
        return SpectralField(grid, c * amp / np.max(np.abs(v)))

    return FluidState(field(), field(grid.dim))


def test_closures_vanish_at_zero():
    zero = np.array(0.0)
    for name, f in CLOSURES.functions().items():
        assert float(f(zero)) == 0.0, name


@given(st.floats(-0.5, 0.5))
def test_closure_formulas(a):
    rs = PARAMS.rho_star
    rho = rs * (1 + a)
    x = rho - rs
    assert CLOSURES.Q(np.array(a)) == pytest.approx(a / (1 + a))
    lhs = a * CLOSURES.G(a)
    assert lhs == pytest.approx((PARAMS.pressure(x) - PARAMS.pressure(0.0)) / rs, abs=1e-14)
    assert CLOSURES.mu_t(a) == pytest.approx(2 * (PARAMS.shear(x) - PARAMS.shear(0.0)) / rs, abs=1e-14)
    assert CLOSURES.lambda_t(a) == pytest.approx((PARAMS.bulk(x) - PARAMS.bulk(0.0)) / rs, abs=1e-14)
    k1 = rho * PARAMS.capillarity(x) - rs * PARAMS.capillarity(0.0)
    assert CLOSURES.kappa1_t(a) == pytest.approx(k1, abs=1e-14)
    dq = CLOSURES.derivatives()["Q"](np.array(a))
    assert dq == pytest.approx(1 / (1 + a) ** 2)


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 0.3))
def test_rhs_agrees_with_physical_oracle(seed, amp):
    s = low_mode_state(seed, amp)
    ge = evaluate_g(s, CLOSURES, PARAMS).total.coeffs
    go = oracle_g(s, PARAMS).coeffs
    assert np.abs(ge - go).max() <= 1e-8 * np.abs(ge).max()


def test_rhs_is_quadratic_at_small_amplitude():
    s = low_mode_state(11, 1.0)
    vals = []
    for eps in (1e-2, 1e-3):
        vals.append(np.abs(evaluate_g(s * eps, CLOSURES, PARAMS).total.coeffs).max() / eps**2)
    assert vals[0] == pytest.approx(vals[1], rel=0.05)


def test_rhs_has_zero_mean_and_is_real():
    s = low_mode_state(4)
    br = evaluate_g(s, CLOSURES, PARAMS)
    for i in range(1, 7):
        assert np.abs(br[i].coeffs[:, 0, 0]).max() < 1e-15
        assert br[i].component(0).hermitian_defect() < 1e-12
    assert np.all(br.total.coeffs[:, ~GRID.dealias_mask] == 0)


def test_gradient_part_of_g6_is_curl_free():
    s = low_mode_state(2)
    g = g_gradient_part6(s, CLOSURES, PARAMS).coeffs
    curl = GRID.xi[0] * g[1] - GRID.xi[1] * g[0]
    assert np.abs(curl).max() <= 1e-13 * np.abs(g).max()


def test_zero_state_gives_zero():
    s = FluidState.zeros(GRID)
    assert np.abs(evaluate_g(s, CLOSURES, PARAMS).total.coeffs).max() == 0.0


def test_density_guard():
    s = low_mode_state(0, amp=0.95)
    with pytest.raises(DensityGuardError):
        evaluate_g(s, CLOSURES, PARAMS)


def test_under_resolved_state_rejected(rng):
    s = FluidState(random_field(GRID, rng, mask=False) * 0.01, random_field(GRID, rng, components=2))
    with pytest.raises(UnderResolvedError):
        evaluate_g(s, CLOSURES, PARAMS)


def test_effective_velocity_roundtrip():
    s = low_mode_state(9)
    w = effective_velocity(s, 1.7)
    back = recover_grad_a(w, s.m, 1.7).coeffs
    assert np.allclose(back, 1j * GRID.xi * s.a.coeffs, atol=1e-15)
