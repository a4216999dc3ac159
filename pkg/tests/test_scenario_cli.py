import csv
import io
import json
import math
import os

import numpy as np
import pytest

from inverse_ballistics.cli import CSV_COLUMNS, export_polyline, main, resolve_path, run_scenario
from inverse_ballistics.errors import ConfigurationError, DomainError
from inverse_ballistics.geometry import GravityContext, envelope_height, impact_point_planar, trajectory_point
from inverse_ballistics.scenario import load_scenario, parse_scenario

V0, G = 180.0, 9.80665
V2 = V0 * V0 / G

QUICK_I = {
    "task": "I",
    "targets": {"M1": [110, 0], "M2": [2700, 0]},
    "runs": [
        {"target": "M1", "cone": "E1", "eps": 0.1},
        {"target": "M2", "cone": "E2", "eps": 0.1},
        {"target": "M1", "cone": "E2", "eps": 0.05},
    ],
}


def write(tmp_path, doc, name="scen.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.mark.parametrize(
    "doc,fragment",
    [
        ({}, "missing field task"),
        ({"task": "III"}, "task"),
        ({"task": "I", "bogus": 1}, "unknown field(s) bogus"),
        ({"task": "I", "runs": [{"target": "M9", "cone": "E1", "eps": 0.1}]}, "runs[0].target"),
        ({"task": "I", "targets": {"A": [200, 0]}, "runs": [{"target": "A", "cone": "E7", "eps": 0.1}]}, "runs[0].cone"),
        ({"task": "I", "targets": {"A": [200, 0]}, "runs": [{"target": "A", "cone": "E1"}]}, "missing field eps"),
        ({"task": "I", "solver": {"gamma": 2}}, "gamma"),
        ({"task": "I", "solver": {"sphere_grid": [4]}}, "solver.sphere_grid"),
        ({"task": "II.a", "weights": [1, 0.01]}, "weights"),
        ({"task": "I", "cones": {"c": {"theta1": 0, "theta2": 360, "g1": {"spline": 1}, "g2": 40}}}, "cones.c"),
        ({"task": "I", "targets": {"A": [[200, 0], [300, 0]]}}, "targets.A"),
        ({"task": "II.a", "targets": {"A": [200, 0]}}, "targets.A"),
    ],
)
def test_schema_errors_name_the_field(doc, fragment):
    with pytest.raises(ConfigurationError) as info:
        parse_scenario(doc, source="s.json")
    assert fragment in str(info.value)


def test_json_syntax_error_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "task": "I",\n  "runs": [,]\n}')
    with pytest.raises(ConfigurationError) as info:
        load_scenario(path)
    assert "line 3" in str(info.value)
    assert main(["solve", str(path)]) == 2


def test_empty_run_list(tmp_path, capsys):
    path = write(tmp_path, {"task": "I", "runs": []})
    assert run_scenario(path) == []
    assert main(["solve", str(path)]) == 0
    out = capsys.readouterr().out
    assert out.strip() == ",".join(CSV_COLUMNS)


def test_units_and_overrides():
    doc = {
        "task": "I",
        "targets": {"A": [500, 0]},
        "cones": {"c": {"theta1": 10, "theta2": 350, "g1": {"constant": 20}, "g2": {"table": [[0, 30], [360, 50]]}}},
        "solver": {"max_iter": 500, "circle_grid": 256},
        "runs": [{"target": "A", "cone": "c", "eps": 0.1, "solver": {"max_iter": 7, "stop_rule": "q"}},
                 {"target": "A", "cone": "c", "eps": 0.1}],
    }
    scen = parse_scenario(doc)
    first, second = scen.runs
    assert first.cone.theta1 == pytest.approx(math.radians(10))
    assert first.cone.g2(math.pi) == pytest.approx(math.radians(40))
    assert (first.params.max_iter, first.params.stop_rule, first.params.circle_grid) == (7, "q", 256)
    assert (second.params.max_iter, second.params.stop_rule) == (500, "iterate")


def test_multitarget_needs_flag_and_reduces():
    doc = {"task": "I", "targets": {"T": [[1000, 0], [1200, 0], [1100, 100]]}}
    with pytest.raises(ConfigurationError):
        parse_scenario(doc)
    doc["runs"] = [{"target": "T", "cone": "E1", "eps": 0.1}]
    assert parse_scenario(doc, chebyshev=True).runs[0].target == pytest.approx((1100.0, 0.0))


def test_task_i_drops_third_coordinate():
    with pytest.warns(UserWarning, match="z coordinate"):
        scen = parse_scenario({"task": "I", "targets": {"M": [110, 0, 20]}})
    assert scen is not None


def test_bundled_tables_resolve():
    for name, n in (("table1.json", 12), ("table2.json", 12), ("table3.json", 8)):
        scen = load_scenario(resolve_path(name))
        assert len(scen.runs) == n
        assert all(run.reference for run in scen.runs)
    dash = load_scenario(resolve_path("table3.json")).runs[5]
    assert (dash.target_name, dash.cone.name, dash.eps) == ("M2", "E1", 0.05)
    assert dash.reference == {"solved": False}


def test_csv_is_deterministic_apart_from_wall_time(tmp_path, capsys):
    path = write(tmp_path, QUICK_I)
    outputs = []
    for threads in ("1", "2"):
        os.environ["INVERSE_BALLISTICS_THREADS"] = threads
        try:
            assert main(["solve", str(path)]) == 0
        finally:
            del os.environ["INVERSE_BALLISTICS_THREADS"]
        rows = read_csv(capsys.readouterr().out)
        for r in rows:
            r.pop("t_s")
        outputs.append(rows)
    assert outputs[0] == outputs[1]
    assert [r["row"] for r in outputs[0]] == ["0", "1", "2"]


def test_printed_angles_regenerate_the_point(tmp_path):
    out = tmp_path / "res.csv"
    doc = dict(QUICK_I)
    assert main(["solve", str(write(tmp_path, doc)), "--out", str(out)]) == 0
    ctx = GravityContext(V0, G)
    for r in read_csv(out.read_text()):
        phi, psi = math.radians(float(r["phi_deg"])), math.radians(float(r["psi_deg"]))
        x, y = impact_point_planar(ctx, phi, psi)
        assert math.hypot(x - float(r["x_N"]), y - float(r["y_N"])) < 0.1

    doc3 = {"task": "II.a", "targets": {"M1": [110, 0, 20]}, "runs": [{"target": "M1", "cone": "E2", "eps": 0.1}]}
    assert main(["solve", str(write(tmp_path, doc3, "s3.json")), "--out", str(out)]) == 0
    (r,) = read_csv(out.read_text())
    phi, psi = math.radians(float(r["phi_deg"])), math.radians(float(r["psi_deg"]))
    n = np.array([float(r["x_N"]), float(r["y_N"]), float(r["z_N"])])
    got = np.array(trajectory_point(ctx, phi, psi, math.hypot(n[0], n[1])), dtype=float)
    assert np.linalg.norm(got - n) < 0.1


def test_non_converged_rows_exit_one(tmp_path, capsys):
    doc = {"task": "II.a", "targets": {"M": [2700, 0, -10]},
           "runs": [{"target": "M", "cone": "E1", "eps": 0.05, "solver": {"max_iter": 20}}]}
    assert main(["solve", str(write(tmp_path, doc))]) == 1
    (row,) = read_csv(capsys.readouterr().out)
    assert row["status"] == "iter_cap"


def test_trace_and_polyline_files(tmp_path, capsys):
    path = write(tmp_path, QUICK_I)
    trace, poly = tmp_path / "trace", tmp_path / "poly"
    code = main(["solve", str(path), "--out", str(tmp_path / "r.csv"), "--trace", str(trace),
                 "--polyline", "5", "--polyline-dir", str(poly)])
    assert code == 0
    assert "psi" in capsys.readouterr().out
    lines = (trace / "row000_branch1.trace").read_text().splitlines()
    assert lines and lines[0].startswith("k=0 ") and all("eps=" in ln and " q=" in ln for ln in lines)
    pts = np.loadtxt(poly / "row001_polyline.csv", delimiter=",", skiprows=1)
    assert pts.shape == (5, 3)
    assert main(["solve", str(path), "--polyline", "1"]) == 2


def _quick_rows():
    return run_scenario(parse_scenario(QUICK_I))


def test_polyline_endpoints():
    for row in _quick_rows():
        pts = export_polyline(row.result, 2)
        assert np.allclose(pts[0], 0.0)
        assert pts[1][:2] == pytest.approx(row.result.point[:2], abs=1e-6)
        assert pts[1][2] == pytest.approx(0.0, abs=1e-6)


def test_polyline_ground_impact_at_full_range():
    # the only shot reaching r = v^2 is psi = pi/4, and it lands at z = 0
    doc = {"task": "I", "g": G, "v0": V0, "targets": {"A": [V2, 0]},
           "cones": {"c": {"theta1": 0, "theta2": 360, "g1": 40, "g2": 50}},
           "runs": [{"target": "A", "cone": "c", "eps": 0.1}]}
    (row,) = run_scenario(parse_scenario(doc))
    assert row.result.converged and row.result.distance == 0.0
    assert row.result.angles.psi == pytest.approx(math.pi / 4, abs=1e-9)
    pts = export_polyline(row.result, 101)
    assert pts[-1][2] == pytest.approx(0.0, abs=1e-6)
    assert math.hypot(*pts[-1][:2]) == pytest.approx(V2, rel=1e-12)


def test_polyline_stays_under_envelope():
    ctx = GravityContext(V0, G)
    for row in _quick_rows():
        pts = export_polyline(row.result, 400)
        r = np.hypot(pts[:, 0], pts[:, 1])
        assert np.all(pts[:, 2] <= envelope_height(ctx, r) + 1e-9)


def test_polyline_rejects_bad_input():
    doc = {"task": "II.a", "targets": {"M": [2700, 0, -10]},
           "runs": [{"target": "M", "cone": "E1", "eps": 0.05, "solver": {"max_iter": 5}}]}
    (row,) = run_scenario(parse_scenario(doc))
    with pytest.raises(DomainError):
        export_polyline(row.result, 10)
    good = _quick_rows()[0]
    with pytest.raises(DomainError):
        export_polyline(good.result, 1)
