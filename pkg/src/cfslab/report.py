"""Report bundles: deterministic JSON, CSV series, two-column plot data and figures.

Floats are written with 12 significant digits and complex numbers as
``[re, im]`` pairs, so identical runs produce byte-identical JSON.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FLOAT_DIGITS = 12


def _float(x: float):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if x == 0.0:
        return 0.0
    return float(f"{x:.{FLOAT_DIGITS}g}")


def to_jsonable(obj):
    """Recursively convert numpy values, complex numbers and dataclass-like objects."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_float(obj.real), _float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int | None = 2) -> str:
    text = json.dumps(to_jsonable(obj), sort_keys=True, indent=indent, ensure_ascii=True,
                      separators=(",", ": ") if indent else (",", ":"))
    return text + "\n"


def config_hash(config: dict) -> str:
    return hashlib.sha256(dumps(config, indent=None).encode()).hexdigest()


@dataclass
class Check:
    """A named numerical invariant compared against its tolerance."""

    name: str
    value: float | None
    threshold: float
    relation: str = "<="   # value <relation> threshold must hold

    @property
    def passed(self) -> bool:
        if self.value is None or (isinstance(self.value, float) and math.isnan(self.value)):
            return False
        if self.relation == "<=":
            return self.value <= self.threshold
        if self.relation == ">=":
            return self.value >= self.threshold
        if self.relation == "==":
            return self.value == self.threshold
        raise ValueError(f"unknown relation {self.relation!r}")

    def to_dict(self) -> dict:
        return {"value": self.value, "threshold": self.threshold, "relation": self.relation,
                "passed": self.passed}


@dataclass
class Series:
    """A plottable (x, y) series; written as CSV, two-column text and a PNG figure."""

    name: str
    x: list
    y: list
    xlabel: str = "x"
    ylabel: str = "y"
    logx: bool = False
    logy: bool = False


@dataclass
class ExperimentResult:
    name: str
    results: dict
    checks: list = field(default_factory=list)
    series: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)       # name -> (header, rows)
    diagnostics: list = field(default_factory=list)  # reported, not part of the exit status

    def add(self, name: str, value, threshold: float, relation: str = "<=") -> Check:
        c = Check(name, None if value is None else float(value), float(threshold), relation)
        self.checks.append(c)
        return c

    @property
    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    @property
    def ok(self) -> bool:
        return not self.failing


def report_document(result: ExperimentResult, config: dict, seed: int, tolerances: dict) -> dict:
    return {
        "experiment": result.name,
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "tolerances": tolerances,
        "status": "ok" if result.ok else "fail",
        "failing": result.failing,
        "checks": {c.name: c.to_dict() for c in result.checks},
        "diagnostics": {d.name: d.to_dict() for d in result.diagnostics},
        "results": result.results,
    }


def _real(values) -> np.ndarray:
    v = np.asarray(values)
    return v.real.astype(float) if np.iscomplexobj(v) else v.astype(float)


def write_plot_data(path: Path, x, y) -> None:
    x, y = _real(x), _real(y)
    with open(path, "w") as fh:
        for a, b in zip(x, y):
            fh.write(f"{a:.12e} {b:.12e}\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_csv_cell(v) for v in row])


def _csv_cell(v):
    j = to_jsonable(v)
    return json.dumps(j) if isinstance(j, list) else j


def render_figure(path: Path, s: Series) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x, y = _real(s.x), _real(s.y)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if s.logy:
        y = np.abs(y)
    ax.plot(x, y, marker="o", ms=3, lw=1)
    if s.logx:
        ax.set_xscale("log")
    if s.logy:
        ax.set_yscale("log")
    ax.set_xlabel(s.xlabel)
    ax.set_ylabel(s.ylabel)
    ax.set_title(s.name)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def write_bundle(result: ExperimentResult, out_dir, config: dict, seed: int, tolerances: dict,
                 formats: str = "json", figures: bool = True) -> dict:
    """Write report.json (json/both), CSV files (csv/both), plot data and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report_document(result, config, seed, tolerances)
    written = []
    if formats in ("json", "both"):
        p = out / "report.json"
        p.write_text(dumps(doc))
        written.append(p.name)
    if formats in ("csv", "both"):
        p = out / "checks.csv"
        with open(p, "w", newline="") as fh:
            fh.write(f"# experiment={result.name}\n# config_hash={doc['config_hash']}\n# seed={seed}\n")
            fh.write(f"# tolerances={dumps(tolerances, indent=None).strip()}\n")
            w = csv.writer(fh)
            w.writerow(["kind", "name", "value", "relation", "threshold", "passed"])
            for kind, items in (("check", result.checks), ("diagnostic", result.diagnostics)):
                for c in items:
                    w.writerow([kind, c.name, _csv_cell(c.value), c.relation, _csv_cell(c.threshold), c.passed])
        written.append(p.name)
        for name, (header, rows) in sorted(result.tables.items()):
            p = out / f"{name}.csv"
            write_csv(p, header, rows)
            written.append(p.name)
        for s in result.series:
            p = out / f"{s.name}.csv"
            write_csv(p, [s.xlabel, s.ylabel], zip(_real(s.x), _real(s.y)))
            written.append(p.name)
    for s in result.series:
        p = out / f"{s.name}.dat"
        write_plot_data(p, s.x, s.y)
        written.append(p.name)
        if figures:
            render_figure(out / f"{s.name}.png", s)
            written.append(f"{s.name}.png")
    return {"directory": str(out), "files": written, "document": doc}
