"""Command line: ``cfs-lab <subcommand> [options]``.

Exit status 0 when every check passes, 1 when a numerical check fails (the
failing invariants are named on stderr), 2 for invalid configuration (JSON
diagnostics on stderr).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import EXPERIMENTS, ConfigError, ExperimentConfig, build_config, load_config_file, parse_tol_overrides
from .report import Check, ExperimentResult, dumps, write_bundle

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2

HELP = {
    "action": "evaluate the causal action, constraints and the EL function",
    "classify": "causal classification of all point pairs (bundled demo by default)",
    "minimize": "minimize the causal action and report criticality diagnostics",
    "second-variation": "decompose the second variation and compare with finite differences",
    "decoupling": "strip and slice restricted second-variation diagnostics",
    "solve-strip": "assemble and solve the strip operator on the lattice model",
    "commutator": "conservation and positivity of the commutator inner product",
    "extend": "Gram matrix of the extended Hilbert space",
    "couple": "perturbative coupling iteration",
    "appendix-a": "trace-free commutator operator built from Lagrangian gradients",
    "dirac-demo": "regularized Dirac dynamics for one spatial Fourier mode",
    "kernel-asymptotics": "Bessel kernel asymptotics and decay exponents",
    "verify-all": "run every experiment and summarize",
}


class _Parser(argparse.ArgumentParser):
    """Argument errors become machine-readable diagnostics with exit status 2."""

    def error(self, message):
        _emit({"status": "invalid_config", "diagnostics": [{"field": "arguments", "message": message}]})
        sys.exit(EXIT_CONFIG)


def _emit(obj) -> None:
    sys.stderr.write(json.dumps(obj, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--tol", action="append", metavar="NAME=VAL", default=[],
                        help="override a named tolerance (repeatable)")
    common.add_argument("--out", metavar="DIR", help="output directory (default cfs-lab-out)")
    common.add_argument("--format", choices=("json", "csv", "both"), help="report formats (default json)")
    common.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    system = argparse.ArgumentParser(add_help=False)
    system.add_argument("--system", metavar="PATH", help="system JSON file instead of a random system")
    system.add_argument("--n", type=int, help="spin dimension of the random system")
    system.add_argument("--f", type=int, help="Hilbert space dimension of the random system")
    system.add_argument("--points", type=int, help="number of points of the random system")
    system.add_argument("--kappa", type=float, help="kappa of the random system")

    mode = argparse.ArgumentParser(add_help=False)
    mode.add_argument("--k", type=float, help="spatial momentum of the Dirac mode")
    mode.add_argument("--m", type=float, help="mass of the Dirac mode")

    parser = _Parser(prog="cfs-lab", description="Numerical laboratory for discrete causal fermion systems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        parents = [common]
        if name in ("action", "classify", "minimize", "second-variation", "decoupling", "appendix-a", "verify-all"):
            parents.append(system)
        if name in ("dirac-demo", "verify-all"):
            parents.append(mode)
        sub.add_parser(name, parents=parents, help=HELP[name], description=HELP[name])
    return parser


def config_from_args(args) -> ExperimentConfig:
    file_data = load_config_file(args.config) if args.config else None
    overrides: dict = {"tolerances": parse_tol_overrides(args.tol)}
    for key in ("seed", "out", "format"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    if getattr(args, "system", None) is not None:
        overrides["system"] = args.system
    gen = {"N": getattr(args, "points", None), "f": getattr(args, "f", None), "n": getattr(args, "n", None),
           "kappa": getattr(args, "kappa", None)}
    overrides["generator"] = {k: v for k, v in gen.items() if v is not None}
    params = {"k": getattr(args, "k", None), "m": getattr(args, "m", None)}
    overrides["params"] = {k: v for k, v in params.items() if v is not None}
    return build_config(args.command, file_data, overrides)


def _run_one(cfg: ExperimentConfig) -> ExperimentResult:
    from .experiments import run_experiment
    try:
        return run_experiment(cfg)
    except ConfigError:
        raise
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        # a numerical routine refused to continue; report it as a failed invariant
        res = ExperimentResult(cfg.experiment, {"error": {"type": type(exc).__name__, "message": str(exc)}})
        res.checks.append(Check(_invariant_name(exc), None, 0.0))
        return res


def _invariant_name(exc: Exception) -> str:
    name = type(exc).__name__
    out = "".join("_" + c.lower() if c.isupper() else c for c in name).lstrip("_")
    return out or "numerical_error"


def _bundle(cfg: ExperimentConfig, res: ExperimentResult, out_dir: Path, figures: bool) -> dict:
    return write_bundle(res, out_dir, cfg.canonical(), cfg.seed, cfg.tolerances.as_dict(), cfg.format, figures)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("CFS_LAB_THREADS", "1")))
    except ValueError:
        return 1


def run_verify_all(cfg: ExperimentConfig, figures: bool) -> tuple[int, dict]:
    from .experiments import SUITE
    cfgs = [cfg.for_experiment(name, **cfg.params) for name in SUITE]
    workers = min(_workers(), len(cfgs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, cfgs))
    else:
        results = [_run_one(c) for c in cfgs]
    out = Path(cfg.out)
    summary = ExperimentResult("verify-all", {"experiments": {}})
    for c, res in zip(cfgs, results):
        _bundle(c, res, out / c.experiment, figures)
        summary.results["experiments"][c.experiment] = {
            "status": "ok" if res.ok else "fail", "failing": res.failing,
            "checks": {k.name: k.to_dict() for k in res.checks},
            "diagnostics": {d.name: d.to_dict() for d in res.diagnostics},
        }
        for k in res.checks:
            summary.checks.append(Check(f"{c.experiment}.{k.name}", k.value, k.threshold, k.relation))
        for d in res.diagnostics:
            summary.diagnostics.append(Check(f"{c.experiment}.{d.name}", d.value, d.threshold, d.relation))
    bundle = _bundle(cfg, summary, out / "verify-all", figures=False)
    return (EXIT_OK if summary.ok else EXIT_NUMERICAL), {"result": summary, "bundle": bundle}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        if cfg.experiment == "verify-all":
            code, info = run_verify_all(cfg, not args.no_figures)
            res = info["result"]
            bundle = info["bundle"]
        else:
            res = _run_one(cfg)
            bundle = _bundle(cfg, res, Path(cfg.out) / cfg.experiment, not args.no_figures)
            code = EXIT_OK if res.ok else EXIT_NUMERICAL
    except ConfigError as exc:
        _emit({"status": "invalid_config", "diagnostics": exc.diagnostics})
        return EXIT_CONFIG
    for d in res.diagnostics:
        if not d.passed:
            _emit({"status": "diagnostic_outside_tolerance", "experiment": res.name, "name": d.name,
                   "value": d.value, "threshold": d.threshold})
    if code != EXIT_OK:
        _emit({"status": "numerical_failure", "experiment": res.name, "failing": res.failing})
    sys.stdout.write(dumps({"experiment": res.name, "status": "ok" if code == EXIT_OK else "fail",
                            "directory": bundle["directory"],
                            "config_hash": bundle["document"]["config_hash"],
                            "checks": {c.name: c.passed for c in res.checks}}))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
