import json
import subprocess
import sys

import numpy as np
import pytest

from finsler_mobius import cli
from finsler_mobius.config import DEFAULT_TOLERANCES, draw_samples, parse_tol_overrides, validate
from finsler_mobius.errors import ConfigError

EUCLID_MOBIUS = {"seed": 7, "metric": {"kind": "euclidean", "dim": 2},
                 "phi": "-log(1 + x1**2 + x2**2)", "samples": {"count": 20}}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(tmp_path, command, cfg, *extra, out="out"):
    code = cli.run([command, "--config", write(tmp_path, cfg), "--out", str(tmp_path / out), *extra])
    report_path = tmp_path / out / "report.json"
    report = json.loads(report_path.read_text()) if report_path.exists() else None
    return code, report


# config ----------------------------------------------------------------------------

def test_schema_rejects_unknown_keys_and_missing_seed():
    with pytest.raises(ConfigError):
        validate({"metric": {"kind": "euclidean"}, "colour": "red"})
    with pytest.raises(ConfigError):
        validate({"metric": {"kind": "euclidean"}, "samples": {"count": 3}})
    cfg = validate({"metric": {"kind": "euclidean"}, "samples": {"count": 3}}, seed=5)
    assert cfg.seed == 5


def test_tolerance_overrides():
    cfg = validate({"tolerances": {"mobius": 1e-6}}, tol_overrides={"cocycle": 1e-9})
    assert cfg.tol("mobius") == 1e-6 and cfg.tol("cocycle") == 1e-9
    assert cfg.tol("frenet") == DEFAULT_TOLERANCES["frenet"]
    with pytest.raises(ConfigError):
        validate({}, tol_overrides={"nonsense": 1.0})
    with pytest.raises(ConfigError):
        parse_tol_overrides(["mobius"])
    with pytest.raises(ConfigError):
        validate({"tolerances": {"mobius": -1.0}})


def test_samples_independent_of_chunking():
    whole = draw_samples(3, 2, range(10))
    parts = [draw_samples(3, 2, range(i, i + 2)) for i in range(0, 10, 2)]
    assert np.array_equal(whole.x, np.concatenate([p.x for p in parts]))
    assert np.array_equal(whole.y, np.concatenate([p.y for p in parts]))


def test_dumps_uses_17_digits():
    text = cli.dumps({"a": 0.1, "b": [1.0 / 3.0, 2], "c": True, "d": None})
    assert "0.10000000000000001" in text and "0.33333333333333331" in text
    assert json.loads(text)["b"][1] == 2


# commands ----------------------------------------------------------------------------

def test_check_mobius_pass_and_fail(tmp_path):
    code, rep = run(tmp_path, "check-mobius", EUCLID_MOBIUS)
    assert code == 0 and rep["verdict"] == "mobius"
    assert set(rep) >= {"command", "config", "checks", "verdict", "engine_version", "wall_time"}
    assert set(rep["checks"][0]) == {"name", "residual", "tol", "pass"}
    code, rep = run(tmp_path, "check-mobius", {**EUCLID_MOBIUS, "phi": "x1"}, out="o2")
    assert code == 1 and rep["verdict"] == "not-mobius"
    assert rep["checks"][0]["residual"] >= 0.5


def test_tol_flag_changes_outcome(tmp_path):
    code, _ = run(tmp_path, "check-mobius", {**EUCLID_MOBIUS, "phi": "x1"}, "--tol", "mobius=1.0")
    assert code == 0


def test_exit_codes(tmp_path):
    assert run(tmp_path, "check-mobius", {"metric": {"kind": "euclidean"}, "bogus": 1})[0] == 2
    assert run(tmp_path, "check-mobius", {**EUCLID_MOBIUS, "phi": "x9"})[0] == 2
    bad_metric = {**EUCLID_MOBIUS, "metric": {"kind": "randers", "b": [1.5, 0.0]}}
    code, rep = run(tmp_path, "check-mobius", bad_metric, out="o3")
    assert code == 3 and rep["verdict"] == "breakdown"
    strict = {"metric": {"kind": "round_sphere"},
              "circle": {"x0": [0.1, 0.2], "X0": [1, 0], "Y0": [0, 1], "kappa": 1.0, "length": 0.1,
                         "strict_frame": True}}
    assert run(tmp_path, "trace-circle", strict)[0] == 2
    pole = {"projective": {"q": 0, "d2p0": 0, "length": 1.0, "T": [1, 0, 1, -0.5]}}
    assert run(tmp_path, "projective", pole)[0] == 2
    with pytest.raises(SystemExit):
        cli.run(["check-mobius"])


def test_inspect_and_conformal_verify(tmp_path):
    cfg = {"metric": {"kind": "round_sphere"}, "sample": {"x": [0.3, -0.2], "y": [1.0, 0.5]}}
    code, rep = run(tmp_path, "inspect", cfg)
    assert code == 0
    assert rep["data"]["flag_curvature"]["K"] == pytest.approx(1.0, abs=1e-10)
    assert rep["data"]["ricci_scalar"] == pytest.approx(1.0, abs=1e-10)
    cfg = {"seed": 1, "metric": {"kind": "randers", "b": ["-0.3*x2", "0.3*x1"]}, "phi": "0.2*x1",
           "sigma": "x2**2", "samples": {"count": 10}}
    assert run(tmp_path, "conformal-verify", cfg, out="cv")[0] == 0
    code, rep = run(tmp_path, "cocycle", cfg, out="cc")
    assert code == 0 and rep["data"]["raw_A_residual"] > 1e-4


def test_trace_commands_write_csv(tmp_path):
    cfg = {"metric": {"kind": "randers", "b": [0.5, 0]},
           "geodesic": {"x0": [0, 0], "y0": [1, 1], "length": 0.5},
           "circle": {"x0": [0, 0], "X0": [1, 0], "Y0": [0, 1], "kappa": 1.0, "length": 0.5}}
    assert run(tmp_path, "trace-geodesic", cfg, out="g")[0] == 0
    assert (tmp_path / "g" / "geodesic.csv").read_text().startswith("s,x1,x2,X1,X2\n")
    assert run(tmp_path, "trace-circle", cfg, out="c")[0] == 0
    assert (tmp_path / "c" / "circle.csv").read_text().startswith("s,x1,x2,X1,X2,Y1,Y2\n")


def test_projective_command(tmp_path):
    cfg = {"projective": {"q": 0, "p0": 0, "dp0": 1, "d2p0": 0, "length": 1.0, "T": [2, 1, 1, 3]}}
    code, rep = run(tmp_path, "projective", cfg)
    assert code == 0
    assert rep["checks"][0]["name"] == "invariance" and rep["checks"][0]["residual"] <= 1e-6


def test_reports_identical_across_runs_and_jobs(tmp_path):
    cfg = {**EUCLID_MOBIUS, "phi": "0.3*sin(x1)*x2", "samples": {"count": 40}}
    texts = []
    for i, jobs in enumerate(["1", "1", "3"]):
        run(tmp_path, "check-mobius", cfg, "--jobs", jobs, out=f"r{i}")
        lines = (tmp_path / f"r{i}" / "report.json").read_text().splitlines()
        texts.append([ln for ln in lines if '"wall_time"' not in ln])
    assert texts[0] == texts[1] == texts[2]


def test_console_script_stdout(tmp_path):
    path = write(tmp_path, EUCLID_MOBIUS)
    res = subprocess.run([sys.executable, "-m", "finsler_mobius.cli", "check-mobius", "--config", path],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["verdict"] == "mobius"
