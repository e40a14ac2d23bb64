import json
import subprocess
import sys

import numpy as np
import pytest

from cfslab.cli import main
from cfslab.config import ConfigError, build_config, parse_tol_overrides
from cfslab.report import Check, ExperimentResult, Series, config_hash, dumps, to_jsonable, write_bundle
from cfslab.tolerances import DEFAULT


def _run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_jsonable_conversions():
    assert to_jsonable(np.float64(1.0 / 3.0)) == 0.333333333333
    assert to_jsonable(1 + 2j) == [1.0, 2.0]
    assert to_jsonable(np.array([1, 2])) == [1, 2]
    assert to_jsonable(float("nan")) == "nan"
    assert to_jsonable({"a": np.bool_(True)}) == {"a": True}
    with pytest.raises(TypeError):
        to_jsonable(object())


def test_dumps_is_canonical():
    assert dumps({"b": 1, "a": 2}) == dumps({"a": 2, "b": 1})
    assert config_hash({"x": 1.0}) == config_hash({"x": 1.0000000000000002})


@pytest.mark.parametrize("value, threshold, relation, passed", [
    (1.0, 2.0, "<=", True), (3.0, 2.0, "<=", False), (3.0, 2.0, ">=", True),
    (None, 1.0, "<=", False), (float("nan"), 1.0, ">=", False), (1.0, 1.0, "==", True),
])
def test_check_relations(value, threshold, relation, passed):
    assert Check("c", value, threshold, relation).passed is passed


def test_bundle_files(tmp_path):
    res = ExperimentResult("demo", {"x": 1.5})
    res.add("small", 1e-12, 1e-8)
    res.series.append(Series("curve", [1, 2, 3], [1, 4, 9]))
    info = write_bundle(res, tmp_path, {"experiment": "demo"}, 3, DEFAULT.as_dict(), "both", figures=True)
    names = set(info["files"])
    assert {"report.json", "checks.csv", "curve.csv", "curve.dat", "curve.png"} <= names
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["seed"] == 3 and doc["status"] == "ok"
    assert doc["config_hash"] == config_hash({"experiment": "demo"})
    header = (tmp_path / "checks.csv").read_text().splitlines()[:4]
    assert header[1] == f"# config_hash={doc['config_hash']}" and header[2] == "# seed=3"
    assert (tmp_path / "curve.dat").read_text().splitlines()[1].split() == ["2.000000000000e+00",
                                                                           "4.000000000000e+00"]


def test_tolerance_overrides():
    assert parse_tol_overrides(["cons=1e-6"]) == {"cons": 1e-6}
    with pytest.raises(ConfigError):
        parse_tol_overrides(["cons"])
    cfg = build_config("commutator", None, {"tolerances": {"cons": 1e-6}})
    assert cfg.tolerances.cons == 1e-6
    with pytest.raises(ConfigError) as exc:
        build_config("commutator", None, {"tolerances": {"nonsense": 1.0}})
    assert exc.value.diagnostics[0]["field"].startswith("tol")


def test_config_collects_all_diagnostics():
    with pytest.raises(ConfigError) as exc:
        build_config("solve-strip", {"strip": {"t0": 0, "t_min": 9, "t_max": 3, "t1": 15}, "params": {"bogus": 1}})
    assert len(exc.value.diagnostics) >= 2


def test_classify_bundled_demo(tmp_path, capsys):
    code, out, _ = _run(["classify", "--out", str(tmp_path), "--no-figures"], capsys)
    assert code == 0
    doc = json.loads((tmp_path / "classify" / "report.json").read_text())
    assert doc["status"] == "ok"
    assert json.loads(out)["experiment"] == "classify"


def test_dirac_demo_example(tmp_path, capsys):
    code, _, _ = _run(["dirac-demo", "--k", "0", "--m", "1", "--out", str(tmp_path), "--no-figures"], capsys)
    assert code == 0


def test_verify_all_example(tmp_path, capsys):
    argv = ["verify-all", "--seed", "7", "--n", "1", "--f", "4", "--points", "6", "--out", str(tmp_path),
            "--no-figures"]
    code, out, err = _run(argv, capsys)
    assert code == 0, err
    doc = json.loads((tmp_path / "verify-all" / "report.json").read_text())
    assert doc["seed"] == 7 and doc["status"] == "ok"
    assert set(doc["results"]["experiments"]) >= {"classify", "commutator", "dirac-demo"}


def test_reports_are_byte_identical(tmp_path, capsys):
    for d in ("a", "b"):
        assert _run(["commutator", "--seed", "3", "--out", str(tmp_path / d), "--no-figures"], capsys)[0] == 0
    a = (tmp_path / "a" / "commutator" / "report.json").read_bytes()
    b = (tmp_path / "b" / "commutator" / "report.json").read_bytes()
    assert a == b
    doc = json.loads(a)
    assert {"config_hash", "seed", "tolerances"} <= set(doc)


def test_csv_format(tmp_path, capsys):
    code, _, _ = _run(["action", "--format", "csv", "--out", str(tmp_path), "--no-figures"], capsys)
    assert code == 0
    assert (tmp_path / "action" / "checks.csv").exists()
    assert not (tmp_path / "action" / "report.json").exists()


def test_numerical_failure_names_the_invariant(tmp_path, capsys):
    code, _, err = _run(["commutator", "--tol", "cons=0", "--out", str(tmp_path), "--no-figures"], capsys)
    assert code == 1
    status = [json.loads(line) for line in err.splitlines() if "numerical_failure" in line][0]
    assert "conservation_drift" in status["failing"]


@pytest.mark.parametrize("argv", [
    ["commutator", "--tol", "nonsense=1"],
    ["action", "--points", "1"],
    ["no-such-command"],
    ["action", "--config", "/nonexistent/config.json"],
])
def test_invalid_configuration_exit_code(argv, tmp_path, capsys):
    try:
        code = main(argv + ["--out", str(tmp_path)])
    except SystemExit as exc:  # argument errors leave through the parser
        code = exc.code
    assert code == 2
    diag = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert diag["status"] == "invalid_config" and diag["diagnostics"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cfslab", "classify", "--out", str(tmp_path), "--no-figures"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == "ok"
