import json
import math

import numpy as np
import pytest

from korteweg.fourier import make_grid
from korteweg.probes import (
    ESTIMATES,
    InadmissibleParameters,
    SampleGenerator,
    check_admissible,
    compose,
    probe_inequality,
    resolve_params,
    write_reports,
)

SMALL = SampleGenerator(make_grid(2, 32))


def test_registry_covers_all_closures():
    for name in ("Q", "G", "mu_t", "lambda_t", "kappa1_t", "kappa2_t", "kappa3_t"):
        assert f"composition-{name}" in ESTIMATES
        assert f"gevrey-composition-{name}" in ESTIMATES
    for eid in ("besov-algebra", "product-l1", "product-linf", "product-lq-lp", "paraproduct",
                "remainder", "gevrey-paraproduct", "gevrey-remainder"):
        assert eid in ESTIMATES


def test_samples_are_real_band_limited_and_normalized():
    draw = SMALL.draw(3, 0)
    f = draw.field()
    g = SMALL.grid
    assert f.hermitian_defect() < 1e-14
    assert np.max(np.abs(f.to_physical())) == pytest.approx(1.0)
    assert f.coeffs[0, 0] == 0
    assert np.all(f.coeffs[np.any(np.abs(g.k_int) >= g.n // 4, axis=0)] == 0)
    again = SMALL.draw(3, 0).field()
    assert np.array_equal(f.coeffs, again.coeffs)
    assert not np.array_equal(f.coeffs, SMALL.draw(4, 0).field().coeffs)


def test_fitted_constant_is_prefix_monotone():
    a = probe_inequality("besov-algebra", generator=SMALL, count=4, seed=2)
    b = probe_inequality("besov-algebra", generator=SMALL, count=8, seed=2)
    assert b.ratios[:4] == a.ratios
    assert b.fitted_constant >= a.fitted_constant


@pytest.mark.parametrize("eid", ["besov-algebra", "product-l1", "product-linf", "paraproduct",
                                 "remainder", "gevrey-paraproduct", "composition-Q"])
def test_probes_finite_on_small_grid(eid):
    rep = probe_inequality(eid, generator=SMALL, count=3)
    assert math.isfinite(rep.fitted_constant) and rep.fitted_constant > 0
    assert rep.n_samples == 3


def test_gevrey_variant_at_time_zero_equals_plain():
    plain = probe_inequality("paraproduct", generator=SMALL, count=3)
    gev = probe_inequality("gevrey-paraproduct", {"t": 0.0}, generator=SMALL, count=3)
    assert gev.ratios == pytest.approx(plain.ratios, rel=1e-14)


def test_composition_with_linear_closure_is_exact():
    # mu_t is linear in a for the probe closures, so the ratio is its slope exactly
    rep = probe_inequality("composition-mu_t", generator=SampleGenerator(SMALL.grid, amplitude=0.2),
                           count=2)
    assert rep.fitted_constant == pytest.approx(0.6, rel=1e-12)


def test_compose_matches_pointwise_evaluation():
    f = SMALL.draw(0, 0).field()
    out = compose(lambda v: 3.0 * v, f)
    assert np.allclose(out.coeffs, 3.0 * f.coeffs)


@pytest.mark.parametrize("eid,params,needle", [
    ("besov-algebra", {"s": -1.0}, "s > 0"),
    ("product-l1", {"s1": 2.0}, "s1 <= d/p"),
    ("product-linf", {"s2": 1.0}, "s2 < d/p"),
    ("product-lq-lp", {"p": 5.0}, "p <= 2q"),
    ("product-lq-lp-time", {"rho1": 3.0}, "1/rho1 + 1/rho2"),
    ("paraproduct", {"k1": 0.0, "q": 1.0}, "k1 >"),
    ("remainder", {"s": 0.5}, "s > k"),
    ("gevrey-paraproduct", {"t": -1.0}, "t >= 0"),
    ("gevrey-remainder", {"q": 1.0}, "q = 1.0"),
    ("gevrey-composition-Q", {"s": 0.5}, "s > d/p"),
])
def test_inadmissible_parameters_rejected(eid, params, needle):
    with pytest.raises(InadmissibleParameters) as exc:
        probe_inequality(eid, params, generator=SMALL, count=1)
    assert any(needle in v for v in exc.value.violations), exc.value.violations


def test_every_violation_is_listed():
    pr = resolve_params("product-l1", {"s1": 3.0, "s2": 3.0, "p": 2.0})
    with pytest.raises(InadmissibleParameters) as exc:
        check_admissible("product-l1", pr, 2)
    assert len(exc.value.violations) == 2


def test_unknown_estimate_and_parameter():
    with pytest.raises(KeyError):
        resolve_params("no-such-estimate")
    with pytest.raises(KeyError):
        resolve_params("besov-algebra", {"zeta": 1})
    assert resolve_params("besov-algebra", {"r": "inf"})["r"] == math.inf


def test_report_json(tmp_path):
    rep = probe_inequality("product-linf", {"s1": 1.0}, generator=SMALL, count=2, seed=5)
    path = tmp_path / "probes.json"
    write_reports(path, [rep])
    data = json.loads(path.read_text())
    assert data[0]["estimate_id"] == "product-linf"
    assert data[0]["n_samples"] == 2 and data[0]["seed"] == 5
    assert set(data[0]) == {"estimate_id", "params", "n_samples", "fitted_constant", "seed"}
