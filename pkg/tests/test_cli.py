import subprocess
import sys

import pytest

from spotvol.cli import main

SMALL = """
[experiment]
n = 2340
nh = 10
K_n = 20
iterations = 20
seed = 7

[psi]
grid_points = 6
iterations = 500
"""


@pytest.fixture
def small_spec(tmp_path):
    f = tmp_path / "small.spec"
    f.write_text(SMALL)
    return f


def run(*args):
    return main([str(a) for a in args])


def test_simulate_then_estimate(tmp_path, small_spec):
    out = tmp_path / "out"
    assert run("simulate", "--spec", small_spec, "--out", out) == 0
    path_csv = out / "path.csv"
    assert path_csv.read_text().splitlines()[0] == "i,t,x,spot_var,y"
    assert run("estimate", path_csv, "--spec", small_spec, "--out", out) == 0
    assert (out / "minima.csv").read_text().startswith("k,block_start_t,m_k,diff_k")
    curve = (out / "curve.csv").read_text().splitlines()
    assert curve[0] == "k,t_center,raw,corrected,quarticity,ci_lower,ci_upper,true_spot_var"
    assert len(curve) == 1 + 234


def test_outputs_are_byte_identical(tmp_path, small_spec):
    for name in ("a", "b"):
        assert run("simulate", "--spec", small_spec, "--out", tmp_path / name, "--seed", 3) == 0
        assert run("coverage", "--spec", small_spec, "--out", tmp_path / name) == 0
        assert run("table1", "--spec", small_spec, "--out", tmp_path / name, "--threads", 2) == 0
    for f in ("path.csv", "coverage.csv", "table1.csv", "psi_nh10.csv", "psi_nh10.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_table1_then_table2(tmp_path, small_spec):
    spec = tmp_path / "t.spec"
    spec.write_text(SMALL + "\n[table2]\nslopes = res/table1.csv\n")
    assert run("table2", "--spec", spec) == 1  # no table1 artifact yet
    assert run("table1", "--spec", spec, "--out", tmp_path / "res") == 0
    assert run("table2", "--spec", spec, "--out", tmp_path / "res") == 0
    assert (tmp_path / "res" / "table2.csv").read_text().startswith("nh,K_n,MSD,MAB,MABC")


def test_curve_and_calibrate(tmp_path, small_spec):
    assert run("curve", "--spec", small_spec, "--out", tmp_path) == 0
    assert (tmp_path / "bands.csv").exists()
    assert run("calibrate-psi", "--spec", small_spec, "--out", tmp_path) == 0
    assert (tmp_path / "psi_nh10.csv").exists()


def test_invalid_spec_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.spec"
    bad.write_text("[noise]\nlevel_eta = -5\n")
    assert run("simulate", "--spec", bad, "--out", tmp_path) == 2
    assert "invalid spec" in capsys.readouterr().err
    assert run("simulate", "--spec", tmp_path / "missing.spec") == 2


def test_argument_errors_exit_code(small_spec):
    assert run("nonsense") == 2
    assert run("simulate", "--threads", 0, "--spec", small_spec) == 2
    assert run("simulate", "--seed", "abc") == 2


def test_runtime_error_exit_code(tmp_path, small_spec, capsys):
    assert run("estimate", tmp_path / "absent.csv", "--spec", small_spec) == 1
    assert "error" in capsys.readouterr().err


def test_console_entry_point(tmp_path, small_spec):
    res = subprocess.run([sys.executable, "-m", "spotvol.cli", "simulate", "--spec", str(small_spec),
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "path.csv").exists()
