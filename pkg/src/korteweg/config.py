"""Experiment configuration: schema, overrides and hypothesis gates.

A config is a nested mapping with the sections below.  Every key must appear in
the schema; unknown keys are hard errors.  Physical admissibility (positive
viscosities and capillarity, zero sound speed) is a hard error as well, while
the index conditions of the global existence result only produce warnings.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .linear import Regime, classify_regime
from .params import P_PRIME_TOL

KINDS = ("classify", "linear-evolve", "simulate", "norms", "gevrey", "probe-estimates", "sweep")
BANNER = "outside theorem hypotheses"

SCHEMA: dict[str, Any] = {
    "experiment": None,
    "seed": 0,
    "grid": {"dim": 2, "n": 64, "period": 2 * math.pi * 8},
    "params": {
        "mu_bar": 1.0,
        "lambda_bar": 1.0,
        "kappa_bar": 2.0,
        "rho_star": 1.0,
        "pressure_curvature": 1.0,
        "p0": 0.0,
        # polynomial coefficients in (rho - rho*); None keeps the constant family
        "pressure": None,
        "shear": None,
        "bulk": None,
        "capillarity": None,
    },
    "indices": {"p": 2.0, "q": 2.0, "j0": 0},
    "integrator": {
        "scheme": "etdrk2",
        "dt": 0.05,
        "t_end": 10.0,
        "adapt": False,
        "tol": 1e-3,
        "snapshot_stride": 2,
        "nonlinear": True,
    },
    "initial": {"kind": "gaussian", "amplitude": 1e-3, "width": 3.0, "decay": 0.0},
    "gevrey": {"c0": None, "nonlinear": False, "fit_t_min": 0.1, "fit_t_max": 10.0},
    "classify": {"nu_min": 0.5, "nu_max": 4.0, "kappa_min": 0.1, "kappa_max": 4.0, "points": 20},
    "probes": {"estimates": ["besov-algebra"], "count": 64, "overrides": {}},
    "sweep": {"base": "classify", "parameter": "params.kappa_bar", "values": [], "workers": 1},
    "output": {"snapshots": True},
}

# sections whose values are free-form mappings
_OPEN = {("probes", "overrides")}


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid config:\n  " + "\n  ".join(errors))


@dataclass
class ExperimentConfig:
    data: dict
    warnings: list[str] = field(default_factory=list)
    gates: list[dict] = field(default_factory=list)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def kind(self) -> str:
        return self.data["experiment"]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])


def load_raw(path: str | Path | None) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        return json.loads(text) or {}
    return yaml.safe_load(text) or {}


def _parse_scalar(text: str):
    return yaml.safe_load(text)


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    out = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError([f"override {item!r} is not key=value"])
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError([f"override {key!r} descends into a non-section"])
        node[parts[-1]] = _parse_scalar(value)
    return out


def _merge(schema: dict, raw: dict, path: tuple, errors: list[str]) -> dict:
    out = {}
    for key, value in raw.items():
        if key not in schema:
            where = ".".join(path + (key,))
            errors.append(f"unknown key {where!r}")
    for key, default in schema.items():
        here = path + (key,)
        if isinstance(default, dict) and here not in _OPEN:
            sub = raw.get(key, {})
            if not isinstance(sub, dict):
                errors.append(f"section {'.'.join(here)!r} must be a mapping")
                sub = {}
            out[key] = _merge(default, sub, here, errors)
        else:
            out[key] = copy.deepcopy(raw.get(key, default))
    return out


def _gate(gates: list[dict], warnings: list[str], name: str, ok: bool, detail: str):
    gates.append({"gate": name, "passed": bool(ok), "detail": detail})
    if not ok:
        warnings.append(f"{BANNER}: {name} violated ({detail})")


def index_gates(dim: int, p: float, q: float) -> list[dict]:
    gates: list[dict] = []
    warnings: list[str] = []
    _gate(gates, warnings, "1 <= q <= p <= 2q", 1 <= q <= p <= 2 * q, f"p = {p}, q = {q}")
    _gate(gates, warnings, "p < d", p < dim, f"{p:g} {'<' if p < dim else 'not <'} {dim}")
    lhs, rhs = 1.0 / q, 1.0 / p + 2.0 / dim
    _gate(gates, warnings, "1/q < 1/p + 2/d", lhs < rhs, f"{lhs:.6g} vs {rhs:.6g}")
    _gate(gates, warnings, "d >= 3", dim >= 3, f"d = {dim}")
    return gates


def validate_config(raw: dict, kind: str | None = None) -> ExperimentConfig:
    errors: list[str] = []
    data = _merge(SCHEMA, raw, (), errors)
    if kind is not None:
        if data["experiment"] not in (None, kind):
            errors.append(f"config is for {data['experiment']!r} but {kind!r} was requested")
        data["experiment"] = kind
    if data["experiment"] not in KINDS:
        errors.append(f"experiment must be one of {KINDS}, got {data['experiment']!r}")

    g = data["grid"]
    if g["dim"] not in (1, 2, 3):
        errors.append(f"grid.dim must be 1, 2 or 3, got {g['dim']}")
    if not isinstance(g["n"], int) or g["n"] < 8 or g["n"] & (g["n"] - 1):
        errors.append(f"grid.n must be a power of two >= 8, got {g['n']}")
    if not float(g["period"]) > 0:
        errors.append(f"grid.period must be positive, got {g['period']}")

    pr = data["params"]
    mu = float(pr["mu_bar"])
    nu = 2 * mu + float(pr["lambda_bar"])
    ka = float(pr["kappa_bar"])
    if not mu > 0:
        errors.append(f"mu_bar > 0 violated (mu_bar = {mu})")
    if not nu > 0:
        errors.append(f"nu_bar = 2 mu_bar + lambda_bar > 0 violated (nu_bar = {nu})")
    if not ka > 0:
        errors.append(f"kappa_bar > 0 violated (kappa_bar = {ka})")
    if not float(pr["rho_star"]) > 0:
        errors.append(f"rho_star > 0 violated (rho_star = {pr['rho_star']})")
    press = pr["pressure"]
    if press is not None and len(press) > 1 and abs(float(press[1])) >= P_PRIME_TOL:
        errors.append(f"P'(rho*) = 0 violated (linear pressure coefficient {press[1]})")
    for name in ("pressure", "shear", "bulk", "capillarity"):
        v = pr[name]
        if v is not None and (not isinstance(v, list) or not all(isinstance(c, (int, float)) for c in v)):
            errors.append(f"params.{name} must be a list of polynomial coefficients")

    ix = data["indices"]
    p, q = float(ix["p"]), float(ix["q"])
    if not (p >= 1 and q >= 1):
        errors.append(f"indices p, q must be >= 1, got p = {p}, q = {q}")

    it = data["integrator"]
    if it["scheme"] not in ("exponential-euler", "etdrk2"):
        errors.append(f"integrator.scheme must be exponential-euler or etdrk2, got {it['scheme']!r}")
    for k in ("dt", "t_end", "tol"):
        if not float(it[k]) > 0:
            errors.append(f"integrator.{k} > 0 violated ({it[k]})")
    if int(it["snapshot_stride"]) < 1:
        errors.append("integrator.snapshot_stride >= 1 violated")

    if data["initial"]["kind"] not in ("gaussian", "random", "white", "zero"):
        errors.append(f"initial.kind must be gaussian, random, white or zero, got {data['initial']['kind']!r}")

    if errors:
        raise ConfigError(errors)

    cfg = ExperimentConfig(data)
    if data["experiment"] in ("linear-evolve", "simulate", "norms", "gevrey", "sweep"):
        gates = index_gates(int(g["dim"]), p, q)
        cfg.gates.extend(gates)
        cfg.warnings.extend(f"{BANNER}: {x['gate']} violated ({x['detail']})" for x in gates if not x["passed"])
    # analyticity of the closures holds by construction: every closure is a polynomial
    cfg.gates.append({"gate": "closures real analytic", "passed": True, "detail": "polynomial closures"})
    cfg.gates.append({"gate": "P'(rho*) = 0", "passed": True, "detail": "checked"})
    regime = classify_regime(nu, ka)
    nonlinear = data["experiment"] in ("simulate", "norms") or (
        data["experiment"] == "gevrey" and data["gevrey"]["nonlinear"])
    if nonlinear and it["nonlinear"]:
        ok = regime is not Regime.COMPLEX
        cfg.gates.append({"gate": "nu_bar^2 >= 4 kappa_bar", "passed": ok, "detail": regime.value})
        if not ok:
            cfg.warnings.append(f"{BANNER}: nonlinear run in the Complex regime (nu_bar^2 < 4 kappa_bar)")
    if data["experiment"] == "gevrey" and q == 1:
        cfg.gates.append({"gate": "q != 1 (Gevrey)", "passed": False, "detail": "q = 1"})
        cfg.warnings.append(f"{BANNER}: Gevrey statement excludes q = 1")
    return cfg
