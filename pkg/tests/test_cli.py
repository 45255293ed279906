import csv
import io
import json
import subprocess
import sys

import pytest

from nlperim import cli
from nlperim import minimizer as M


def run(argv, tmp_path, name="out"):
    out = tmp_path / name
    code = cli.main(argv + ["--out", str(out)])
    return code, (out.read_text() if out.exists() else None)


def csv_rows(text):
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def test_perimeter_global_interval(tmp_path):
    code, text = run(["perimeter", "--set", "interval:0,1", "--s", "0.5", "--global"], tmp_path)
    assert code == 0
    doc = json.loads(text)
    assert doc["result"]["total"] == pytest.approx(8.0, rel=1e-12)
    assert doc["config"]["s"] == 0.5 and len(doc["input_hash"]) == 64


def test_perimeter_ball_in_ball(tmp_path):
    code, text = run(["perimeter", "--set", "ball:0,0,1", "--omega", "ball:0,0,2", "--s", "0.5"], tmp_path)
    res = json.loads(text)["result"]
    assert code == 0 and res["total"] > 0 and 0 < res["error"] < 1e-2 * res["total"]


def test_missing_s_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["perimeter", "--set", "interval:0,1", "--global"])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_bad_shape_exits_one(tmp_path):
    code, _ = run(["perimeter", "--set", "blob:1", "--s", "0.5", "--global"], tmp_path)
    assert code == 1
    code, _ = run(["perimeter", "--set", "interval:1,0", "--s", "0.5", "--global"], tmp_path)
    assert code == 1


def test_tolerance_exit_two(tmp_path):
    code, _ = run(["perimeter", "--set", "ball:0,0,1", "--omega", "ball:0,0,2", "--s", "0.5", "--tol", "1e-15"], tmp_path)
    assert code == 2


def test_resource_cap_exit_three(tmp_path):
    code, _ = run(["minimize", "--size", "400", "--free", "150"], tmp_path)
    assert code == 3


def test_asymptotics_csv(tmp_path):
    code, text = run(["asymptotics", "--set", "interval:0,1", "--s-list", "0.5,0.9,0.99,0.999"], tmp_path)
    assert code == 0
    assert text.startswith("# config: ")
    rows = csv_rows(text)
    assert len(rows) == 4
    vals = [float(r["scaled_value"]) for r in rows]
    assert all(abs(b - 2) < abs(a - 2) for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(2.0, rel=0.002)


def test_curvature_oracle(tmp_path):
    code, text = run(["curvature", "--set", "ball:0,0,1", "--point", "1,0", "--s", "0.5", "--oracle"], tmp_path)
    doc = json.loads(text)["result"]
    assert code == 0 and doc["relative_error"] < 1e-6
    code, text = run(["curvature", "--set", "halfspace:0,1,0", "--point", "0.3,0", "--s", "0.5"], tmp_path)
    assert code == 0 and json.loads(text)["result"]["value"] == 0.0


def test_minimize_problem_file(tmp_path):
    pb = M.strip_problem(20, 20, (8, 12), (8, 12), 9, 10, 3)
    path = tmp_path / "strip.json"
    path.write_text(pb.to_json())
    pgm = tmp_path / "best.pgm"
    code, text = run(["minimize", "--problem", str(path), "--seeds", "50", "--pgm", str(pgm)], tmp_path)
    doc = json.loads(text)["result"]
    assert code == 0 and doc["oracle_match"] is True and len(doc["energies"]) == 50
    assert pgm.read_bytes().startswith(b"P5\n20 20\n255\n")


def test_extension_modes(tmp_path):
    code, text = run(["extension", "laplacian", "--s", "0.5"], tmp_path)
    assert code == 0 and json.loads(text)["result"]["relative_gap"] < 1e-3
    code, text = run(["extension", "phi", "--set", "halfspace:0,1,0", "--r-list", "0.5,1", "--s", "0.5", "--tol", "0.03"], tmp_path)
    assert code == 0
    code, _ = run(["extension", "phi", "--s", "0.5"], tmp_path)
    assert code == 1


def test_fractal_modes(tmp_path):
    code, text = run(["fractal", "koch", "--k", "7", "--mode", "boxcount"], tmp_path)
    assert code == 0 and json.loads(text)["result"]["dimension"] == pytest.approx(1.262, abs=0.05)
    code, text = run(["fractal", "koch", "--mode", "series", "--s-list", "0.5,0.8", "--format", "csv"], tmp_path)
    rows = csv_rows(text)
    assert [float(r["ratio"]) for r in rows] == pytest.approx([4 / 3 ** 1.5, 4 / 3 ** 1.2], rel=1e-14)


def test_reruns_are_byte_identical(tmp_path, monkeypatch):
    argv = ["minimize", "--seeds", "4", "--seed", "7"]
    _, a = run(argv, tmp_path, "a")
    _, b = run(argv, tmp_path, "b")
    monkeypatch.setenv("NLPERIM_WORKERS", "2")
    _, c = run(argv, tmp_path, "c")
    assert a == b == c


def test_console_script_entry_point(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "nlperim.cli", "perimeter", "--set", "interval:0,2", "--s", "0.5", "--global", "--format", "csv"],
        capture_output=True,
        text=True,
        check=True,
    )
    (row,) = csv_rows(out.stdout)
    assert float(row["total"]) == pytest.approx(8 * 2 ** 0.5, rel=1e-12)
