"""Experiment configuration: JSON file plus command-line overrides, validated up front."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .tolerances import DEFAULT, Tolerances
from .wave import TimeStrip

EXPERIMENTS = (
    "action", "classify", "minimize", "second-variation", "decoupling", "solve-strip", "commutator",
    "extend", "couple", "appendix-a", "dirac-demo", "kernel-asymptotics", "verify-all",
)

FORMATS = ("json", "csv", "both")

# allowed parameters per experiment with their defaults
PARAM_DEFAULTS: dict[str, dict] = {
    "action": {},
    "classify": {},
    "minimize": {"max_iters": 5000, "trace_mode": "project"},
    "second-variation": {"variation": "random", "samples": 3},
    "decoupling": {"strips": None},
    "solve-strip": {},
    "commutator": {"lambda_scale": None},
    "extend": {"samples": 6, "lambda_rel": 1e-2},
    "couple": {"scales": [1e-3, 1e-1, 10.0], "max_iters": 50},
    "appendix-a": {"cases": 10},
    "dirac-demo": {"k": 0.0, "m": 1.0, "count": 200, "deltas": [1.0, 10.0, 100.0, 1000.0]},
    "kernel-asymptotics": {"a0": 1.0, "width": 1.0, "c": 1.0},
    "verify-all": {"k": 0.0, "m": 1.0},
}

GENERATOR_DEFAULTS = {"N": 6, "f": 4, "n": 1, "kappa": 0.1}
LATTICE_DEFAULTS = {"T": 16, "gamma": [0.7, 0.45, 0.6, 0.3], "r": 0.3, "boost": 0.2}
TOP_LEVEL = {"experiment", "seed", "system", "generator", "lattice", "strip", "tolerances", "params",
             "out", "format"}


class ConfigError(ValueError):
    """Invalid configuration; carries a list of machine-readable diagnostics."""

    def __init__(self, diagnostics: list[dict]):
        super().__init__("; ".join(f"{d['field']}: {d['message']}" for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    system: str | None = None
    generator: dict = field(default_factory=lambda: dict(GENERATOR_DEFAULTS))
    lattice: dict = field(default_factory=lambda: dict(LATTICE_DEFAULTS))
    strip: dict | None = None
    tolerances: Tolerances = DEFAULT
    params: dict = field(default_factory=dict)
    out: str = "cfs-lab-out"
    format: str = "json"

    def canonical(self) -> dict:
        """Everything that influences the numbers (output location and format excluded)."""
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "system": self.system,
            "generator": self.generator,
            "lattice": self.lattice,
            "strip": self.strip,
            "tolerances": self.tolerances.as_dict(),
            "params": self.params,
        }

    def for_experiment(self, name: str, **params) -> "ExperimentConfig":
        """A copy targeting another experiment (used by verify-all)."""
        merged = dict(PARAM_DEFAULTS[name])
        merged.update({k: v for k, v in params.items() if k in merged})
        return ExperimentConfig(name, self.seed, self.system, dict(self.generator), dict(self.lattice),
                                self.strip, self.tolerances, merged, self.out, self.format)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_int(diag, name, v, lo=None):
    if not isinstance(v, int) or isinstance(v, bool):
        diag.append({"field": name, "message": f"expected an integer, got {v!r}"})
    elif lo is not None and v < lo:
        diag.append({"field": name, "message": f"must be >= {lo}, got {v}"})


def _check_num(diag, name, v, positive=False):
    if not _is_number(v):
        diag.append({"field": name, "message": f"expected a number, got {v!r}"})
    elif positive and v <= 0:
        diag.append({"field": name, "message": f"must be positive, got {v}"})


def parse_tol_overrides(items) -> dict:
    out, diag = {}, []
    for item in items or []:
        if "=" not in item:
            diag.append({"field": "tol", "message": f"expected NAME=VALUE, got {item!r}"})
            continue
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError:
            diag.append({"field": f"tol.{k.strip()}", "message": f"not a number: {v!r}"})
    if diag:
        raise ConfigError(diag)
    return out


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError([{"field": "config", "message": f"file not found: {path}"}]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([{"field": "config", "message": f"invalid JSON: {exc}"}]) from None
    if not isinstance(data, dict):
        raise ConfigError([{"field": "config", "message": "top level must be an object"}])
    return data


def build_config(experiment: str, file_data: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge file data and command-line overrides, then validate everything."""
    data = dict(file_data or {})
    overrides = overrides or {}
    diag: list[dict] = []
    for k in sorted(set(data) - TOP_LEVEL):
        diag.append({"field": k, "message": "unknown configuration key"})
    if "experiment" in data and data["experiment"] != experiment:
        diag.append({"field": "experiment",
                     "message": f"config is for {data['experiment']!r} but subcommand is {experiment!r}"})
    if experiment not in EXPERIMENTS:
        diag.append({"field": "experiment", "message": f"unknown experiment {experiment!r}"})

    seed = overrides.get("seed", data.get("seed", 0))
    _check_int(diag, "seed", seed, lo=0)

    system = overrides.get("system", data.get("system"))
    if system is not None and not Path(system).is_file():
        diag.append({"field": "system", "message": f"system file not found: {system}"})

    gen = dict(GENERATOR_DEFAULTS)
    gen_in = data.get("generator", {}) or {}
    if not isinstance(gen_in, dict):
        diag.append({"field": "generator", "message": "must be an object"})
        gen_in = {}
    for k in sorted(set(gen_in) - set(gen)):
        diag.append({"field": f"generator.{k}", "message": "unknown generator key"})
    gen.update({k: v for k, v in gen_in.items() if k in gen})
    gen.update({k: v for k, v in overrides.get("generator", {}).items() if v is not None})
    _check_int(diag, "generator.N", gen["N"], lo=2)
    _check_int(diag, "generator.n", gen["n"], lo=1)
    _check_int(diag, "generator.f", gen["f"], lo=1)
    _check_num(diag, "generator.kappa", gen["kappa"], positive=True)
    if all(isinstance(gen[k], int) for k in ("f", "n")) and gen["f"] < 2 * gen["n"]:
        diag.append({"field": "generator.f", "message": f"needs f >= 2n = {2 * gen['n']} for full signature"})

    lat = dict(LATTICE_DEFAULTS)
    lat_in = data.get("lattice", {}) or {}
    if not isinstance(lat_in, dict):
        diag.append({"field": "lattice", "message": "must be an object"})
        lat_in = {}
    for k in sorted(set(lat_in) - set(lat)):
        diag.append({"field": f"lattice.{k}", "message": "unknown lattice key"})
    lat.update({k: v for k, v in lat_in.items() if k in lat})
    _check_int(diag, "lattice.T", lat["T"], lo=10)
    g = lat["gamma"]
    if not isinstance(g, (list, tuple)) or len(g) == 0 or len(g) % 2 or not all(_is_number(v) for v in g):
        diag.append({"field": "lattice.gamma", "message": "expected an even-length list of numbers"})
    elif len(set(abs(v) for v in g)) != len(g):
        diag.append({"field": "lattice.gamma", "message": "components need distinct |gamma| (else the spectrum is degenerate)"})
    else:
        lat["gamma"] = [float(v) for v in g]
    _check_num(diag, "lattice.r", lat["r"])
    _check_num(diag, "lattice.boost", lat["boost"])

    strip = data.get("strip")
    if strip is not None:
        diag.extend(validate_strip(strip, lat.get("T")))

    tol = DEFAULT
    tol_in = dict(data.get("tolerances", {}) or {})
    tol_in.update(overrides.get("tolerances", {}))
    bad = [k for k, v in tol_in.items() if not _is_number(v)]
    for k in bad:
        diag.append({"field": f"tolerances.{k}", "message": f"not a number: {tol_in[k]!r}"})
    try:
        tol = DEFAULT.with_overrides({k: v for k, v in tol_in.items() if k not in bad})
    except KeyError as exc:
        diag.append({"field": "tolerances", "message": str(exc.args[0])})
    for k, v in tol.as_dict().items():
        if v < 0:
            diag.append({"field": f"tolerances.{k}", "message": "must be non-negative"})

    params = dict(PARAM_DEFAULTS.get(experiment, {}))
    p_in = dict(data.get("params", {}) or {})
    p_in.update({k: v for k, v in overrides.get("params", {}).items() if v is not None})
    for k in sorted(set(p_in) - set(params)):
        diag.append({"field": f"params.{k}", "message": f"unknown parameter for {experiment}"})
    params.update({k: v for k, v in p_in.items() if k in params})
    diag.extend(_validate_params(experiment, params))

    fmt = overrides.get("format", data.get("format", "json"))
    if fmt not in FORMATS:
        diag.append({"field": "format", "message": f"expected one of {', '.join(FORMATS)}"})
    out = overrides.get("out", data.get("out", "cfs-lab-out"))

    if diag:
        raise ConfigError(diag)
    return ExperimentConfig(experiment, seed, system, gen, lat, strip, tol, params, str(out), fmt)


def validate_strip(strip, T=None) -> list[dict]:
    diag = []
    keys = ("t0", "t_min", "t_max", "t1", "delta")
    if not isinstance(strip, dict):
        return [{"field": "strip", "message": "must be an object"}]
    for k in sorted(set(strip) - set(keys)):
        diag.append({"field": f"strip.{k}", "message": "unknown strip key"})
    for k in keys:
        if k not in strip:
            diag.append({"field": f"strip.{k}", "message": "missing"})
        elif not _is_number(strip[k]):
            diag.append({"field": f"strip.{k}", "message": f"expected a number, got {strip[k]!r}"})
    if diag:
        return diag
    t0, tm, tM, t1, d = (strip[k] for k in keys)
    try:
        TimeStrip(float(t0), float(tm), float(tM), float(t1), float(d))
    except ValueError as exc:
        diag.append({"field": "strip", "message": str(exc)})
    if isinstance(T, int) and (t0 != 0 or t1 != T - 1 or d != 1):
        diag.append({"field": "strip", "message": f"the lattice model needs t0 = 0, t1 = T - 1 = {T - 1} and delta = 1"})
    if not diag and tM - tm <= 2 * d + 1:
        diag.append({"field": "strip", "message": "interior strip too short for conservation checks"})
    return diag


def _validate_params(name: str, p: dict) -> list[dict]:
    diag: list[dict] = []
    if name == "minimize":
        _check_int(diag, "params.max_iters", p["max_iters"], lo=1)
        if p["trace_mode"] not in ("project", "penalty"):
            diag.append({"field": "params.trace_mode", "message": "expected 'project' or 'penalty'"})
    elif name == "second-variation":
        if p["variation"] not in ("random", "phase"):
            diag.append({"field": "params.variation", "message": "expected 'random' or 'phase'"})
        _check_int(diag, "params.samples", p["samples"], lo=1)
    elif name == "decoupling" and p["strips"] is not None:
        s = p["strips"]
        if not isinstance(s, list) or not all(isinstance(v, (list, tuple)) and len(v) == 2 and
                                              all(_is_number(t) for t in v) and v[0] <= v[1] for v in s):
            diag.append({"field": "params.strips", "message": "expected a list of [t_lo, t_hi] intervals"})
    elif name == "commutator" and p["lambda_scale"] is not None:
        _check_num(diag, "params.lambda_scale", p["lambda_scale"], positive=True)
    elif name == "extend":
        _check_int(diag, "params.samples", p["samples"], lo=1)
        _check_num(diag, "params.lambda_rel", p["lambda_rel"], positive=True)
    elif name == "couple":
        if not isinstance(p["scales"], list) or not all(_is_number(v) and v >= 0 for v in p["scales"]):
            diag.append({"field": "params.scales", "message": "expected a list of non-negative numbers"})
        _check_int(diag, "params.max_iters", p["max_iters"], lo=1)
    elif name == "appendix-a":
        _check_int(diag, "params.cases", p["cases"], lo=1)
    elif name in ("dirac-demo", "verify-all"):
        _check_num(diag, "params.k", p["k"])
        _check_num(diag, "params.m", p["m"])
        if _is_number(p["k"]) and _is_number(p["m"]) and p["k"] == 0 and p["m"] == 0:
            diag.append({"field": "params.m", "message": "k = m = 0 has a degenerate mode spectrum"})
        if name == "dirac-demo":
            _check_int(diag, "params.count", p["count"], lo=1)
            if not isinstance(p["deltas"], list) or not all(_is_number(v) and v > 0 for v in p["deltas"]):
                diag.append({"field": "params.deltas", "message": "expected a list of positive numbers"})
    elif name == "kernel-asymptotics":
        _check_num(diag, "params.a0", p["a0"], positive=True)
        _check_num(diag, "params.width", p["width"], positive=True)
        _check_num(diag, "params.c", p["c"])
    return diag
