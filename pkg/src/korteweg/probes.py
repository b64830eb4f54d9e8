"""Monte-Carlo probes of product, paraproduct and composition estimates.

Each estimate is a pair (lhs, rhs) of norm expressions plus the hypotheses on
its indices.  A probe draws random band-limited fields, evaluates lhs / rhs on
each and reports the largest ratio.  Hypotheses are checked before anything is
evaluated; violations raise InadmissibleParameters listing every failed
condition.

Sample i is drawn from its own stream seeded by (seed, i), so a larger sample
set always contains the smaller one and the fitted constant can only grow.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .bony import paraproduct, remainder
from .fourier import Padder, SpectralField, TorusGrid, make_grid
from .gevrey import apply_multiplier
from .littlewood_paley import (
    CheminLernerSpec,
    DyadicFilterBank,
    NormSpec,
    besov_norm,
    build_filter_bank,
    chemin_lerner_norm,
    lp_norm,
)
from .nonlinear import ClosureTable, build_closures
from .params import FluidParams

INF = math.inf


class InadmissibleParameters(ValueError):
    def __init__(self, estimate_id: str, violations: list[str]):
        self.estimate_id = estimate_id
        self.violations = violations
        super().__init__(f"{estimate_id}: " + "; ".join(violations))


def probe_params() -> FluidParams:
    """Closures with every composite nonzero, used by the composition probes."""
    return FluidParams(
        rho_star=1.0,
        pressure=[0.0, 0.0, 1.0, 0.5],
        shear=[1.0, 0.3],
        bulk=[1.0, -0.2, 0.1],
        capillarity=[2.0, 0.4, 0.1],
    )


# Kronecker sequence along the generalized golden ratio: low-discrepancy
# coordinates for the first few fields of every sample
_PLASTIC = 1.324717957244746
_KRONECKER = (1.0 / _PLASTIC, 1.0 / _PLASTIC**2, 0.6180339887498949)


@dataclass(frozen=True)
class SampleGenerator:
    """Random real fields with power-law spectra.

    Coefficients have modulus |k|^-decay and random phases (taken from the
    transform of real white noise, so the field is real), restricted to
    |k_i| < n/4 with zero mean and scaled to max |f| = amplitude.  The decay exponent of
    field k in sample i is placed deterministically in decay_range by a
    low-discrepancy sequence; only the noise depends on the seed, so every
    seed sees the same spread of spectral shapes.
    """

    grid: TorusGrid
    decay_range: tuple[float, float] = (0.5, 0.5)
    amplitude: float = 1.0

    def draw(self, seed: int, index: int) -> "SampleDraw":
        return SampleDraw(self, np.random.default_rng([seed, index]), index)

    def field_with_decay(self, rng: np.random.Generator, decay: float) -> SpectralField:
        g = self.grid
        noise = rng.standard_normal(g.shape)
        kn = np.sqrt(np.sum(g.k_int.astype(float) ** 2, axis=0))
        env = np.where(kn > 0, kn, 1.0) ** (-decay)
        band = np.all(np.abs(g.k_int) < g.n // 4, axis=0) & (kn > 0)
        raw = np.fft.fftn(noise)
        phase = raw / np.where(np.abs(raw) > 0, np.abs(raw), 1.0)
        c = phase * env * band
        f = np.real(np.fft.ifftn(c * g.size))
        c = c * (self.amplitude / np.max(np.abs(f)))
        return SpectralField(g, c)


class SampleDraw:
    """The fields of one sample, produced in order."""

    def __init__(self, gen: SampleGenerator, rng: np.random.Generator, index: int):
        self.gen, self.rng, self.index = gen, rng, index
        self._k = 0

    def field(self) -> SpectralField:
        alpha = _KRONECKER[self._k % len(_KRONECKER)]
        u = (0.5 + (self.index + 1) * alpha) % 1.0
        self._k += 1
        lo, hi = self.gen.decay_range
        return self.gen.field_with_decay(self.rng, lo + (hi - lo) * u)


def heat_series(f: SpectralField, times: np.ndarray) -> list[SpectralField]:
    return [SpectralField(f.grid, np.exp(-t * f.grid.xi_sq) * f.coeffs) for t in times]


def compose(closure: Callable[[np.ndarray], np.ndarray], f: SpectralField) -> SpectralField:
    """F(f) evaluated pointwise on the 2x grid, truncated back."""
    pad = Padder(f.grid, 2)
    vals = closure(pad.to_fine_physical(f.coeffs))
    return SpectralField(f.grid, pad.truncate(pad.fine_forward(vals)))


@dataclass
class ProbeContext:
    grid: TorusGrid
    bank: DyadicFilterBank
    closures: ClosureTable


Check = Callable[[dict, int], list[str]]
Evaluate = Callable[[dict, ProbeContext, "SampleDraw"], tuple[float, float]]


@dataclass(frozen=True)
class Estimate:
    estimate_id: str
    defaults: dict
    check: Check
    evaluate: Evaluate
    plain_variant: Optional[str] = None
    default_dim: int = 2


def _b(s, p, r) -> NormSpec:
    return NormSpec(float(s), float(p), float(r))


def _conj(p: float) -> float:
    return INF if p == 1 else (1.0 if math.isinf(p) else p / (p - 1.0))


def _inv(x: float) -> float:
    return 0.0 if math.isinf(x) else 1.0 / x


def _range(name: str, v: float, lo: float, hi: float, open_lo=False, open_hi=False) -> list[str]:
    ok_lo = v > lo if open_lo else v >= lo
    ok_hi = v < hi if open_hi else v <= hi
    if ok_lo and ok_hi:
        return []
    lb = "(" if open_lo else "["
    rb = ")" if open_hi else "]"
    return [f"{name} = {v} not in {lb}{lo}, {hi}{rb}"]


# --- product estimates -------------------------------------------------------

def _check_algebra(pr, d):
    out = []
    if not pr["s"] > 0:
        out.append(f"s > 0 violated (s = {pr['s']})")
    out += _range("p", pr["p"], 1, INF) + _range("r", pr["r"], 1, INF)
    return out


def _eval_algebra(pr, ctx, draw):
    f, g = draw.field(), draw.field()
    fg = _product(f, g)
    spec = _b(pr["s"], pr["p"], pr["r"])
    lhs = besov_norm(fg, spec, ctx.bank)
    rhs = (lp_norm(f, INF) * besov_norm(g, spec, ctx.bank)
           + lp_norm(g, INF) * besov_norm(f, spec, ctx.bank))
    return lhs, rhs


def _product(f: SpectralField, g: SpectralField) -> SpectralField:
    return SpectralField(f.grid, Padder(f.grid, 2).product(f.coeffs, g.coeffs))


def _check_product1(pr, d):
    p = pr["p"]
    out = _range("p", p, 1, INF)
    if not pr["s1"] <= d / p:
        out.append(f"s1 <= d/p violated ({pr['s1']} > {d / p})")
    if not pr["s2"] <= d / p:
        out.append(f"s2 <= d/p violated ({pr['s2']} > {d / p})")
    floor = d * max(0.0, 2.0 / p - 1.0)
    if not pr["s1"] + pr["s2"] > floor:
        out.append(f"s1 + s2 > d max(0, 2/p - 1) violated ({pr['s1'] + pr['s2']} <= {floor})")
    return out


def _eval_product1(pr, ctx, draw):
    d, p = ctx.grid.dim, pr["p"]
    a, b = draw.field(), draw.field()
    lhs = besov_norm(_product(a, b), _b(pr["s1"] + pr["s2"] - d / p, p, 1), ctx.bank)
    rhs = besov_norm(a, _b(pr["s1"], p, 1), ctx.bank) * besov_norm(b, _b(pr["s2"], p, 1), ctx.bank)
    return lhs, rhs


def _check_product_inf(pr, d):
    p = pr["p"]
    out = _range("p", p, 1, INF)
    if not pr["s1"] <= d / p:
        out.append(f"s1 <= d/p violated ({pr['s1']} > {d / p})")
    if not pr["s2"] < d / p:
        out.append(f"s2 < d/p violated ({pr['s2']} >= {d / p})")
    floor = d * max(0.0, 2.0 / p - 1.0)
    if not pr["s1"] + pr["s2"] >= floor:
        out.append(f"s1 + s2 >= d max(0, 2/p - 1) violated ({pr['s1'] + pr['s2']} < {floor})")
    return out


def _eval_product_inf(pr, ctx, draw):
    d, p = ctx.grid.dim, pr["p"]
    a, b = draw.field(), draw.field()
    lhs = besov_norm(_product(a, b), _b(pr["s1"] + pr["s2"] - d / p, p, INF), ctx.bank)
    rhs = besov_norm(a, _b(pr["s1"], p, 1), ctx.bank) * besov_norm(b, _b(pr["s2"], p, INF), ctx.bank)
    return lhs, rhs


def _check_lq_lp(pr, d):
    p, q = pr["p"], pr["q"]
    out = []
    if not 1 <= q <= p <= 2 * q:
        out.append(f"1 <= q <= p <= 2q violated (p = {p}, q = {q})")
    if not p < d:
        out.append(f"p < d violated ({p} >= {d})")
    if not 1.0 / q < 1.0 / p + 2.0 / d:
        out.append(f"1/q < 1/p + 2/d violated ({1 / q:.4g} >= {1 / p + 2 / d:.4g})")
    return out


def _eval_lq_lp(pr, ctx, draw):
    d, p, q = ctx.grid.dim, pr["p"], pr["q"]
    a, b = draw.field(), draw.field()
    lhs = besov_norm(_product(a, b), _b(d / q - 2, q, INF), ctx.bank)
    lo, hi = _b(d / p - 2, p, INF), _b(d / p, p, INF)
    rhs = (besov_norm(a, lo, ctx.bank) * besov_norm(b, hi, ctx.bank)
           + besov_norm(b, lo, ctx.bank) * besov_norm(a, hi, ctx.bank))
    return lhs, rhs


def _check_lq_lp_time(pr, d):
    out = _check_lq_lp(pr, d)
    for k in ("rho1", "rho2", "rhobar1", "rhobar2"):
        out += _range(k, pr[k], 1, INF)
    left = _inv(pr["rho1"]) + _inv(pr["rho2"])
    right = _inv(pr["rhobar1"]) + _inv(pr["rhobar2"])
    if not math.isclose(left, right, abs_tol=1e-12):
        out.append(f"1/rho1 + 1/rho2 = 1/rhobar1 + 1/rhobar2 violated ({left} != {right})")
    if left > 1 + 1e-12:
        out.append(f"time exponent rho = {1 / left} below 1")
    return out


def _eval_lq_lp_time(pr, ctx, draw):
    d, p, q = ctx.grid.dim, pr["p"], pr["q"]
    times = np.linspace(0.0, pr["horizon"], int(pr["n_times"]))
    a = heat_series(draw.field(), times)
    b = heat_series(draw.field(), times)
    ab = [_product(x, y) for x, y in zip(a, b)]
    inv_rho = _inv(pr["rho1"]) + _inv(pr["rho2"])
    rho = INF if inv_rho == 0 else 1.0 / inv_rho

    def cl(fields, s, pp, theta):
        return chemin_lerner_norm(times, fields, CheminLernerSpec(_b(s, pp, INF), theta), ctx.bank)

    lhs = cl(ab, d / q - 2, q, rho)
    rhs = (cl(a, d / p - 2, p, pr["rho1"]) * cl(b, d / p, p, pr["rho2"])
           + cl(b, d / p - 2, p, pr["rhobar1"]) * cl(a, d / p, p, pr["rhobar2"]))
    return lhs, rhs


# --- paraproduct and remainder ------------------------------------------------

def _check_key_i(pr, d):
    p, q = pr["p"], pr["q"]
    out = _range("p", p, 1, INF) + _range("q", q, 1, INF)
    floor = d * max(0.0, 1.0 / q - 1.0 / p)
    if not pr["k1"] > floor:
        out.append(f"k1 > d max(0, 1/q - 1/p) violated ({pr['k1']} <= {floor:.4g})")
    if not p <= 2 * q:
        out.append(f"p <= 2q violated ({p} > {2 * q})")
    return out


def _check_key_ii(pr, d):
    p, q = pr["p"], pr["q"]
    out = _range("p", p, 1, INF) + _range("q", q, 1, INF)
    k = pr["k1"] + pr["k2"]
    floor = k - d * min(1.0 / p, _inv(_conj(p)))
    if not pr["s"] > floor:
        out.append(f"s > k - d min(1/p, 1/p') violated ({pr['s']} <= {floor:.4g})")
    if not p <= 2 * q:
        out.append(f"p <= 2q violated ({p} > {2 * q})")
    return out


def _gevrey_gate(pr):
    out = _range("p", pr["p"], 1, INF, open_lo=True, open_hi=True)
    out += _range("q", pr["q"], 1, INF, open_lo=True, open_hi=True)
    if not pr["t"] >= 0:
        out.append(f"t >= 0 violated (t = {pr['t']})")
    if not pr["c0"] >= 0:
        out.append(f"c0 >= 0 violated (c0 = {pr['c0']})")
    return out


def _key_eval(op):
    def run(pr, ctx, draw):
        d, p, q, s = ctx.grid.dim, pr["p"], pr["q"], pr["s"]
        k = pr["k1"] + pr["k2"]
        a, b = draw.field(), draw.field()
        r = math.sqrt(pr.get("c0", 0.0) * pr.get("t", 0.0))
        out = op(a, b, ctx.bank)
        lhs = besov_norm(apply_multiplier(out, r), _b(s - k + d / q - d / p, q, INF), ctx.bank)
        big_a, big_b = apply_multiplier(a, r), apply_multiplier(b, r)
        rhs = (besov_norm(big_a, _b(d / p - pr["k1"], p, INF), ctx.bank)
               * besov_norm(big_b, _b(s - pr["k2"], p, INF), ctx.bank))
        return lhs, rhs
    return run


# --- compositions ---------------------------------------------------------------

def _check_comp(pr, d):
    out = []
    if not pr["s"] > 0:
        out.append(f"s > 0 violated (s = {pr['s']})")
    return out + _range("p", pr["p"], 1, INF) + _range("r", pr["r"], 1, INF)


def _comp_eval(name):
    def run(pr, ctx, draw):
        f = draw.field()
        spec = _b(pr["s"], pr["p"], pr["r"])
        fn = getattr(ctx.closures, name)
        return besov_norm(compose(fn, f), spec, ctx.bank), besov_norm(f, spec, ctx.bank)
    return run


def _check_comp_gevrey(pr, d):
    p = pr["p"]
    out = _range("p", p, 1, 2 * d, open_lo=True)
    if not pr["s"] > d / p:
        out.append(f"s > d/p violated ({pr['s']} <= {d / p:.4g})")
    out += _range("r", pr["r"], 1, INF)
    if not pr["c0"] >= 0:
        out.append(f"c0 >= 0 violated (c0 = {pr['c0']})")
    return out


def _comp_gevrey_eval(name):
    def run(pr, ctx, draw):
        times = np.linspace(0.0, pr["horizon"], int(pr["n_times"]))
        u = heat_series(draw.field(), times)
        fn = getattr(ctx.closures, name)
        c0 = pr["c0"]
        big_u = [apply_multiplier(x, math.sqrt(c0 * t)) for x, t in zip(u, times)]
        big_f = [apply_multiplier(compose(fn, x), math.sqrt(c0 * t)) for x, t in zip(u, times)]
        spec = CheminLernerSpec(_b(pr["s"], pr["p"], 1), pr["r"])
        return (chemin_lerner_norm(times, big_f, spec, ctx.bank),
                chemin_lerner_norm(times, big_u, spec, ctx.bank))
    return run


CLOSURE_NAMES = ClosureTable.NAMES


def _registry() -> dict[str, Estimate]:
    reg: dict[str, Estimate] = {}

    def add(e: Estimate):
        reg[e.estimate_id] = e

    add(Estimate("besov-algebra", {"s": 1.0, "p": 2.0, "r": 1.0}, _check_algebra, _eval_algebra))
    add(Estimate("product-l1", {"s1": 0.5, "s2": 0.5, "p": 2.0},
                 _check_product1, _eval_product1))
    add(Estimate("product-linf", {"s1": 1.0, "s2": 0.5, "p": 2.0},
                 _check_product_inf, _eval_product_inf))
    add(Estimate("product-lq-lp", {"p": 2.0, "q": 2.0}, _check_lq_lp, _eval_lq_lp, default_dim=3))
    add(Estimate("product-lq-lp-time", {"p": 2.0, "q": 2.0, "rho1": 2.0, "rho2": 2.0, "rhobar1": INF,
                            "rhobar2": 1.0, "horizon": 1.0, "n_times": 5},
                 _check_lq_lp_time, _eval_lq_lp_time, default_dim=3))
    key = {"s": 1.5, "k1": 1.0, "k2": 1.0, "p": 2.0, "q": 2.0}
    add(Estimate("paraproduct", dict(key), _check_key_i, _key_eval(paraproduct)))
    add(Estimate("remainder", dict(key), _check_key_ii, _key_eval(remainder)))
    gkey = dict(key, c0=1.0, t=0.5)
    add(Estimate("gevrey-paraproduct", dict(gkey), lambda pr, d: _check_key_i(pr, d) + _gevrey_gate(pr),
                 _key_eval(paraproduct), plain_variant="paraproduct"))
    add(Estimate("gevrey-remainder", dict(gkey), lambda pr, d: _check_key_ii(pr, d) + _gevrey_gate(pr),
                 _key_eval(remainder), plain_variant="remainder"))
    for name in CLOSURE_NAMES:
        add(Estimate(f"composition-{name}", {"s": 1.0, "p": 2.0, "r": 1.0}, _check_comp, _comp_eval(name)))
        add(Estimate(f"gevrey-composition-{name}", {"s": 1.5, "p": 2.0, "r": INF, "c0": 1.0, "horizon": 0.5,
                                         "n_times": 6},
                     _check_comp_gevrey, _comp_gevrey_eval(name)))
    return reg


ESTIMATES: dict[str, Estimate] = _registry()

COMPOSITION_AMPLITUDE = 0.2


@dataclass
class ProbeReport:
    estimate_id: str
    params: dict
    n_samples: int
    fitted_constant: float
    seed: int
    ratios: list[float] = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("ratios")
        d["params"] = {k: _json_num(v) for k, v in d["params"].items()}
        return d


def _json_num(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def resolve_params(estimate_id: str, params: Optional[dict] = None) -> dict:
    if estimate_id not in ESTIMATES:
        raise KeyError(f"unknown estimate {estimate_id!r}; known: {sorted(ESTIMATES)}")
    est = ESTIMATES[estimate_id]
    out = dict(est.defaults)
    for k, v in (params or {}).items():
        if k not in out:
            raise KeyError(f"{estimate_id} has no parameter {k!r}; expected {sorted(out)}")
        out[k] = float(v) if not isinstance(v, str) else float(v.replace("inf", "Infinity"))
    return out


def check_admissible(estimate_id: str, params: dict, dim: int) -> None:
    est = ESTIMATES[estimate_id]
    violations = est.check(params, dim)
    if violations:
        raise InadmissibleParameters(estimate_id, violations)


def default_grid(estimate_id: str) -> TorusGrid:
    dim = ESTIMATES[estimate_id].default_dim
    return make_grid(dim, 128 if dim == 2 else 32)


def probe_inequality(estimate_id: str, params: Optional[dict] = None,
                     generator: Optional[SampleGenerator] = None, count: int = 64,
                     seed: int = 0, closures_from: Optional[FluidParams] = None) -> ProbeReport:
    """Largest lhs / rhs over count samples."""
    pr = resolve_params(estimate_id, params)
    if generator is None:
        grid = default_grid(estimate_id)
        amp = COMPOSITION_AMPLITUDE if estimate_id.startswith(("composition-", "gevrey-composition-")) else 1.0
        generator = SampleGenerator(grid, amplitude=amp)
    grid = generator.grid
    check_admissible(estimate_id, pr, grid.dim)
    if count < 1:
        raise ValueError("count must be positive")
    ctx = ProbeContext(grid, build_filter_bank(grid), build_closures(closures_from or probe_params()))
    est = ESTIMATES[estimate_id]
    ratios = []
    for i in range(count):
        lhs, rhs = est.evaluate(pr, ctx, generator.draw(seed, i))
        if not rhs > 0:
            raise ArithmeticError(f"{estimate_id}: sample {i} has vanishing right-hand side")
        ratios.append(lhs / rhs)
    fitted = float(np.max(ratios))
    if not math.isfinite(fitted):
        raise ArithmeticError(f"{estimate_id}: non-finite fitted constant")
    return ProbeReport(estimate_id, pr, count, fitted, seed, ratios)


def write_reports(path, reports: list[ProbeReport]) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_json() for r in reports], fh, indent=2, sort_keys=True)
        fh.write("\n")
