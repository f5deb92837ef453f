import json
import subprocess
import sys

import pytest

from harmid.cli import main


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return str(p)


def _run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def quad_manifest(tmp_path):
    return _write(tmp_path, "q.json", {
        "dimension": 2, "model": "euclidean", "f": "0.1*(x1^2+x2^2)",
        "domain": {"lower": [-2, -2], "upper": [2, 2]}, "points": [[1, 1]],
    })


def test_eval_residual_and_trace(capsys, quad_manifest):
    code, out, _ = _run(capsys, ["eval", "--manifest", quad_manifest, "--quantity", "residual_d"])
    assert code == 0
    rec = json.loads(out)
    assert rec["value"] == pytest.approx(0.384) and rec["quantity"] == "residual_d"
    assert rec["s"] == pytest.approx(0.08)
    code, out, _ = _run(capsys, ["eval", "--manifest", quad_manifest, "--quantity", "trace_chi"])
    assert json.loads(out)["value"] == pytest.approx(0.8)


def test_eval_point_override(capsys, quad_manifest):
    code, out, _ = _run(capsys, ["eval", "--manifest", quad_manifest, "--quantity", "chi", "--point", "0,0"])
    assert code == 0
    assert json.loads(out)["point"] == [0.0, 0.0]


def test_eval_model_field(capsys, tmp_path):
    m = _write(tmp_path, "h.json", {"dimension": 2, "model": "hyperbolic",
                                    "field": {"name": "hyperbolic_horizontal", "params": {"b": 0.2}}})
    code, out, _ = _run(capsys, ["eval", "--manifest", m, "--quantity", "tension_d", "--point", "1,2"])
    assert code == 0
    assert json.loads(out)["value"] == [0.0, 0.0]


def test_check_affine(capsys, tmp_path):
    m = _write(tmp_path, "a.json", {"dimension": 2, "model": "euclidean", "f": "0.6*x1",
                                    "domain": {"lower": [-1, -1], "upper": [1, 1]}})
    code, out, _ = _run(capsys, ["check", "--manifest", m, "--samples", "100", "--seed", "3"])
    rep = json.loads(out)
    assert code == 0
    assert all(r["max_residual"] <= 1e-12 for r in rep["records"])
    assert rep["summary"]["failed"] == 0


def test_check_cubic_hyperbolic(capsys, tmp_path):
    m = _write(tmp_path, "c.json", {
        "dimension": 2, "model": "hyperbolic",
        "f": "0.01*x1^3 - 0.02*x1*x2^2 + 0.015*x2^3 + 0.03*x1*x2",
        "domain": {"lower": [-1, 0.5], "upper": [1, 2]},
    })
    code, out, _ = _run(capsys, ["check", "--manifest", m, "--samples", "50", "--seed", "1"])
    assert code == 0
    assert all(r["passed"] for r in json.loads(out)["records"])


def test_check_validity_violation(capsys, tmp_path):
    m = _write(tmp_path, "v.json", {"dimension": 2, "model": "euclidean", "f": "x1^2",
                                    "domain": {"lower": [0, 0], "upper": [1, 1]}})
    code, _, err = _run(capsys, ["check", "--manifest", m, "--samples", "5"])
    assert code == 3
    assert "point" in err


@pytest.mark.parametrize("payload, where", [
    ('{"dimension": 2, "model": "euclidean", "f": "x1^^2"}', "offset 3"),
    ('{"dimension": 2, "model": "euclidean",\n "f": }', "line 2"),
    ('{"dimension": 2, "metric": [["1"], ["0", "1"]], "model": "euclidean", "f": "x1"}', "exactly one"),
    ('{"dimension": 2, "model": "euclidean", "f": "x3"}', "x3"),
])
def test_input_errors(capsys, tmp_path, payload, where):
    m = _write(tmp_path, "bad.json", payload)
    code, _, err = _run(capsys, ["eval", "--manifest", m, "--quantity", "chi", "--point", "0,0"])
    assert code == 2
    assert where in err


def test_eval_outside_domain(capsys, tmp_path):
    m = _write(tmp_path, "h.json", {"dimension": 2, "model": "hyperbolic", "f": "0.1*x2"})
    code, _, _ = _run(capsys, ["eval", "--manifest", m, "--quantity", "chi", "--point", "0,-1"])
    assert code == 2


def test_custom_metric_manifest(capsys, tmp_path):
    m = _write(tmp_path, "m.json", {
        "dimension": 2, "coordinates": ["x1", "x2"], "metric": [["1/x2^2"], ["0", "1/x2^2"]],
        "f": "0.2*x1", "domain": {"lower": [-2, 0.5], "upper": [2, 3]}, "points": [[1, 2]],
    })
    code, out, _ = _run(capsys, ["eval", "--manifest", m, "--quantity", "residual_d"])
    assert code == 0 and json.loads(out)["value"] == 0.0


def test_solve_base_and_deformed(capsys, tmp_path):
    m = _write(tmp_path, "s.json", {"dimension": 2, "model": "euclidean",
                                    "domain": {"lower": [0, 0], "upper": [1, 1]}})
    out_csv = tmp_path / "o.csv"
    code, out, _ = _run(capsys, ["solve", "--manifest", m, "--grid", "33x33", "--bc", "x1*x2",
                                 "--mode", "base", "--out", str(out_csv)])
    assert code == 0
    summ = json.loads(out)
    assert summ["final_residual"] <= 1e-8
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "x1,x2,f,s,lap,residual" and len(lines) == 33 * 33 + 1
    for row in lines[1:]:
        x, y, f = (float(v) for v in row.split(",")[:3])
        assert abs(f - x * y) <= 1e-8
    code, out, _ = _run(capsys, ["solve", "--manifest", m, "--grid", "33x33", "--bc", "0.6*x1",
                                 "--mode", "deformed", "--out", str(out_csv)])
    summ = json.loads(out)
    assert code == 0 and summ["iterations"] == 1
    assert summ["max_s"] == pytest.approx(0.36)


def test_solve_hyperbolic(capsys, tmp_path):
    m = _write(tmp_path, "h.json", {"dimension": 2, "model": "hyperbolic",
                                    "domain": {"lower": [0, 1], "upper": [1, 2]}})
    code, out, _ = _run(capsys, ["solve", "--manifest", m, "--grid", "33x33", "--bc", "0.1*x2",
                                 "--mode", "base", "--out", str(tmp_path / "h.csv")])
    assert code == 0


def test_solve_nonconvergence_exit(capsys, tmp_path, monkeypatch):
    import functools

    import harmid.solver as solver

    monkeypatch.setattr(solver, "GridProblem", functools.partial(solver.GridProblem, max_sweeps=5))
    m = _write(tmp_path, "s.json", {"dimension": 2, "model": "euclidean",
                                    "domain": {"lower": [0, 0], "upper": [1, 1]},
                                    "tolerances": {"residual": 1e-30}})
    out_csv = tmp_path / "o.csv"
    code, out, _ = _run(capsys, ["solve", "--manifest", m, "--grid", "9x9", "--bc", "exp(x1)",
                                 "--out", str(out_csv)])
    assert code == 4
    assert json.loads(out)["converged"] is False
    assert out_csv.exists()


def test_solve_validity_exit(capsys, tmp_path):
    m = _write(tmp_path, "s.json", {"dimension": 2, "model": "euclidean",
                                    "domain": {"lower": [0, 0], "upper": [1, 1]}})
    code, _, _ = _run(capsys, ["solve", "--manifest", m, "--grid", "9x9", "--bc", "2*x1",
                               "--mode", "deformed", "--out", str(tmp_path / "o.csv")])
    assert code == 3


def test_verify_paper_tight_tolerance_fails(capsys):
    code, out, err = _run(capsys, ["verify-paper", "--tol", "1e-15", "--seed", "1"])
    rep = json.loads(out)
    assert code == 1
    assert any(i.startswith("oracle/") for i in rep["summary"]["failed_ids"])
    assert "FAIL oracle/" in err


def test_seed_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("GEO_SEED", "11")
    code, out, _ = _run(capsys, ["verify-paper"])
    assert code == 0 and json.loads(out)["seed"] == 11


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "harmid", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "harmid" in r.stdout
