import csv
import json
import re
import subprocess
import sys

import numpy as np
import pytest

from vhyst.cli import main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_forward_loop(tmp_path):
    out = tmp_path / "loop.csv"
    argv = ["loop", "--mode", "forward", "--excitation", "uni", "--K", "20",
            "--eps", "1e-8", "--tol", "1e-8", "--steps", "500", "--out", str(out)]
    assert main(argv) == 0
    rows = read_csv(out)
    assert len(rows) == 500
    assert list(rows[0]) == ["i", "t", "Hx", "Hy", "Bx", "By", "iters", "backtracks", "time_s"]
    assert float(rows[-1]["t"]) == 1.0


def test_inverse_loop_from_forward_output(tmp_path):
    fwd, inv = tmp_path / "fwd.csv", tmp_path / "inv.csv"
    assert main(["loop", "--excitation", "rot", "--K", "5", "--steps", "80", "--out", str(fwd)]) == 0
    assert main(["loop", "--mode", "inverse", "--input-b", str(fwd), "--K", "5", "--out", str(inv)]) == 0
    a, b = read_csv(fwd), read_csv(inv)
    assert len(b) == 80
    for ra, rb in zip(a, b):
        assert float(ra["Bx"]) == float(rb["Bx"])
        assert float(rb["Hx"]) == pytest.approx(float(ra["Hx"]), abs=1e-6 * 500)


def test_forward_loop_from_field_file(tmp_path):
    src, out = tmp_path / "src.csv", tmp_path / "out.csv"
    main(["loop", "--K", "3", "--steps", "20", "--out", str(src)])
    assert main(["loop", "--K", "3", "--input-h", str(src), "--out", str(out)]) == 0
    assert [r["Bx"] for r in read_csv(out)] == [r["Bx"] for r in read_csv(src)]


def test_single_step(tmp_path):
    out = tmp_path / "one.csv"
    assert main(["loop", "--steps", "1", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 1
    assert float(rows[0]["Bx"]) == 0.0 and float(rows[0]["t"]) == 0.0


def _strip_time(path):
    return [{k: v for k, v in row.items() if k != "time_s"} for row in read_csv(path)]


def test_output_is_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["loop", "--excitation", "rot", "--K", "7", "--steps", "60"]
    main(argv + ["--out", str(a)])
    main(argv + ["--out", str(b)])
    assert _strip_time(a) == _strip_time(b)


def test_full_precision_fields(tmp_path):
    out = tmp_path / "loop.csv"
    main(["loop", "--K", "4", "--steps", "30", "--out", str(out)])
    rows = read_csv(out)
    for row in rows[1:]:
        value = row["Bx"]
        assert float(value) == float(format(float(value), ".17g"))
        digits = re.sub(r"[^0-9]", "", value.split("e")[0]).lstrip("0")
        assert len(digits) >= 15 or float(value) == 0.0


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"eps": 1e-4, "tol": 1e-6}))
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    base = ["loop", "--K", "5", "--steps", "40"]
    main(base + ["--config", str(cfg), "--out", str(a)])
    main(base + ["--eps", "1e-4", "--tol", "1e-6", "--out", str(b)])
    main(base + ["--config", str(cfg), "--eps", "1e-8", "--tol", "1e-6", "--out", str(c)])
    assert _strip_time(a) == _strip_time(b)
    assert _strip_time(a) != _strip_time(c)
    d = tmp_path / "d.csv"
    main(base + ["--tol", "1e-6", "--out", str(d)])
    assert _strip_time(c) == _strip_time(d)


def test_material_file(tmp_path):
    mat = tmp_path / "mat.json"
    mat.write_text(json.dumps({"a_s": [50.0], "j_s": [1.545], "chi": [140.0]}))
    out = tmp_path / "loop.csv"
    assert main(["loop", "--material", str(mat), "--steps", "3", "--excitation", "uni", "--out", str(out)]) == 0
    assert len(read_csv(out)) == 3


def test_sweep_eps(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep-eps", "--K", "4", "--steps", "40", "--eps", "1e-2,1e-4,1e-6", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["eps", "err_forward", "err_inverse"]
    assert [float(r["eps"]) for r in rows] == [1e-2, 1e-4, 1e-6]


def test_roundtrip_json(tmp_path):
    out = tmp_path / "rt.json"
    assert main(["roundtrip", "--K", "20", "--excitation", "rot", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["max_rel_err"] <= 1e-6
    assert data["rel_err_sq"] <= 1e-10


def test_bench_table(tmp_path):
    out = tmp_path / "bench.csv"
    argv = ["bench", "--K", "5,10,20,50,100", "--methods", "forward,inverse-dense,inverse-schur",
            "--steps", "20", "--out", str(out)]
    assert main(argv) == 0
    rows = read_csv(out)
    assert len(rows) == 15
    assert list(rows[0]) == ["K", "method", "time_ms", "mean_iters"]
    assert {r["method"] for r in rows} == {"forward", "inverse-dense", "inverse-schur"}


@pytest.mark.parametrize(
    "argv",
    [
        ["loop", "--K", "0"],
        ["loop", "--bogus"],
        ["loop", "--mode", "inverse"],
        ["loop", "--tol", "2"],
        ["loop", "--input-h", "/nonexistent.csv"],
        ["loop", "--config", "/nonexistent.json"],
        ["sweep-eps", "--eps", "1e-2,abc"],
        ["sweep-eps", "--eps", "1e-6,1e-2", "--steps", "5"],
        ["bench", "--methods", "inverse-qr", "--steps", "5"],
        ["frobnicate"],
        [],
    ],
)
def test_bad_arguments_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epsilon": 1.0}))
    assert main(["loop", "--config", str(cfg), "--steps", "2"]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_solver_failure_exit_1(capsys):
    assert main(["loop", "--max-newton", "1", "--steps", "50", "--out", "-"]) == 1
    assert "solver failure" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "vhyst", "loop", "--steps", "5", "--K", "2", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert len(read_csv(out)) == 5
    bad = subprocess.run([sys.executable, "-m", "vhyst", "loop", "--K", "0"], capture_output=True, text=True)
    assert bad.returncode == 2
    assert bad.stderr


def test_stdout_output(capsys):
    assert main(["loop", "--steps", "3", "--K", "2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4
    assert np.isfinite(float(lines[-1].split(",")[4]))
