import json

import numpy as np
import pytest

from rpmono import acceptance
from rpmono.cli import main
from rpmono.lattice import build_torus
from rpmono.tables import TwoPointTable, read_csv, write_csv


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def infrared_rows(out):
    lines = [ln for ln in out.splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, ln.split(","))) for ln in lines[1:]]


def test_infrared_finite(capsys):
    code, out, _ = run(capsys, "infrared", "--d", 1, "--L", 4)
    assert code == 0
    row, = infrared_rows(out)
    assert float(row["J"]) == 0.5 and row["L"] == "4"
    assert "# meta " in out


def test_infrared_extrapolated_and_min_spin(capsys, tmp_path):
    code, out, _ = run(capsys, "infrared", "--d", 3, "--extrapolate", "--tol", "1e-3", "--min-spin",
                       "--u", 0, "--convention", "vertex_sq", "--out", tmp_path / "ir.csv")
    assert code == 0
    row, = infrared_rows(out)
    assert abs(float(row["J"]) - 1.15672) <= 1e-3
    assert row["min_spin"] == "8"
    assert (tmp_path / "ir.csv").read_text() == out
    code, out, _ = run(capsys, "infrared", "--d", 3, "--min-spin", "--u", -1, "--convention", "both")
    rows = infrared_rows(out)
    assert [r["min_spin"] for r in rows] == ["11", "181/2"]
    assert rows[1]["note"]


def test_quantum_dense_and_check(capsys, tmp_path):
    path = tmp_path / "q.csv"
    code, _, _ = run(capsys, "quantum", "--d", 2, "--L", 2, "--u", -1, "--beta", 1, "--out", path)
    assert code == 0
    t = read_csv(path)
    assert t.provenance == "dense" and t.geometry.shape == (2, 2)
    meta = json.loads((tmp_path / "q.csv.json").read_text())
    assert meta["command"].startswith("rpmono quantum") and "version" in meta and meta["seed"] == 0
    assert meta["config"]["u"] == -1.0
    code, out, _ = run(capsys, "check", path, "--M", 0.25, "--out", tmp_path / "r.json")
    assert code == 0 and out.startswith("pass")
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["summary"]["failed"] == 0


def test_quantum_stochastic(capsys, tmp_path):
    path = tmp_path / "s.csv"
    code, _, _ = run(capsys, "quantum", "--d", 2, "--L", 4, "--S", 0.5, "--u", -1, "--beta", 1,
                     "--engine", "stochastic", "--R", 20, "--seed", 7, "--out", path)
    assert code == 0
    t = read_csv(path)
    assert t.has_stderr and t.meta["seed"] == 7 and t.meta["R"] == 20


def test_rpm_enumerate_and_worm(capsys, tmp_path):
    e, w = tmp_path / "e.csv", tmp_path / "w.csv"
    code, _, _ = run(capsys, "rpm", "--d", 2, "--L", 4, "--N", 2, "--beta", 0.5, "--preset", "crossing_on",
                     "--engine", "enumerate", "--out", e)
    assert code == 0
    te = read_csv(e)
    assert "p_connect" in te.extra and te.stderr is None
    code, _, _ = run(capsys, "rpm", "--d", 2, "--L", 4, "--N", 2, "--beta", 0.5, "--preset", "crossing_on",
                     "--engine", "worm", "--sweeps", "2e4", "--seed", 11, "--out", w)
    assert code == 0
    tw = read_csv(w)
    assert tw.has_stderr and tw.meta["burn_in"] == 2000
    mask = tw.stderr > 0
    assert np.all(np.abs(tw.values - te.values)[mask] <= 5 * tw.stderr[mask])


def test_check_constant_and_planted(capsys, tmp_path):
    c = tmp_path / "c.csv"
    write_csv(TwoPointTable.constant(build_torus(2, 4), 0.3), c)
    code, out, _ = run(capsys, "check", c, "--M", 0.3, "--out", tmp_path / "c.json")
    assert code == 0
    recs = json.loads((tmp_path / "c.json").read_text())["records"]
    assert all(r["margin"] == 0 for r in recs if r["inequality"] != "partition_lemma")
    for name, t, expected in acceptance.planted_tables():
        p = tmp_path / f"{name}.csv"
        write_csv(t, p)
        code, out, err = run(capsys, "check", p, "--out", tmp_path / f"{name}.json")
        assert code == 1 and out.startswith("fail")
        recs = json.loads((tmp_path / f"{name}.json").read_text())["records"]
        failed = {(r["inequality"], json.dumps(r["location"])) for r in recs if not r["pass"]}
        # random partition sets may also pick up the planted entries
        assert {(e[0], json.dumps(e[1])) for e in expected} <= failed


@pytest.mark.parametrize("argv", [
    ["quantum", "--d", "2", "--u", "-1"],
    ["rpm", "--d", "2", "--L", "4", "--beta", "-1"],
    ["quantum", "--d", "2", "--L", "3"],
    ["check", "/nonexistent/table.csv"],
    ["quantum", "--bogus"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert "usage" in err


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tiny torus\ninfrared.d = 1\ninfrared.L = 4\nseed = 3\n")
    code, out, _ = run(capsys, "infrared", "--config", cfg)
    assert code == 0 and float(infrared_rows(out)[0]["J"]) == 0.5
    cfg.write_text("infrared.d = 1\ninfrared.colour = blue\n")
    code, _, _ = run(capsys, "infrared", "--config", cfg)
    assert code == 2


def test_capacity_exit(capsys):
    code, _, err = run(capsys, "quantum", "--d", 3, "--L", 4, "--engine", "dense")
    assert code == 3
    assert "dimension cap exceeded" in err


def test_selftest_subset(capsys, tmp_path):
    code, out, _ = run(capsys, "selftest", "--only", "1,4", "--out", tmp_path / "s.json")
    assert code == 0
    assert out.count("[PASS]") == 2
    assert len(json.loads((tmp_path / "s.json").read_text())) == 2
