import argparse
import csv
import subprocess
import sys

import pytest

from stokes_vem.cli import main, parse_degrees, parse_levels
from stokes_vem.harness import CSV_HEADER


def test_parse_levels():
    assert parse_levels("1..4") == [1, 2, 3, 4]
    assert parse_levels("3") == [3]
    for bad in ("0..2", "3..1", "a..b", "1-3"):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_levels(bad)


def test_parse_degrees():
    assert parse_degrees("1,2,3") == [1, 2, 3]
    for bad in ("0", "x", ""):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_degrees(bad)


def test_full_run_writes_every_artifact(tmp_path):
    out = tmp_path / "study.csv"
    meshes = tmp_path / "meshes"
    code = main(["study", "--family", "m1,m3", "--levels", "1..2", "--degree", "1",
                 "--formulation", "f2", "--regular", "--seed", "4", "--out", str(out),
                 "--mesh-dir", str(meshes), "--dump-system", "--infsup", "--patch-test"])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == CSV_HEADER
    assert [(r["family"], r["level"]) for r in rows] == [("M1", "1"), ("M1", "2"),
                                                          ("M3", "1"), ("M3", "2")]
    assert all(r["enhanced"] == "0" and r["formulation"] == "F2" for r in rows)
    assert sorted(p.name for p in meshes.iterdir()) == [
        "m1_l1_s4.mesh", "m1_l2_s4.mesh", "m3_l1_s4.mesh", "m3_l2_s4.mesh"]
    assert len(list(tmp_path.glob("study_*_reg.coo"))) == 4
    patch = list(csv.DictReader((tmp_path / "study_patch.csv").open()))
    assert len(patch) == 4 and all(r["status"] == "ok" for r in patch)
    inf = list(csv.DictReader((tmp_path / "study_infsup.csv").open()))
    assert all(float(r["beta_h"]) > 1e-3 for r in inf)
    # a second run reads the stored meshes and reproduces the CSV
    out2 = tmp_path / "again.csv"
    assert main(["study", "--family", "m1,m3", "--levels", "1..2", "--degree", "1",
                 "--formulation", "f2", "--regular", "--seed", "4", "--out", str(out2),
                 "--mesh-dir", str(meshes)]) == 0
    assert out2.read_bytes() == out.read_bytes()


def test_corrupt_mesh_file_fails_row(tmp_path):
    meshes = tmp_path / "meshes"
    meshes.mkdir()
    (meshes / "m2_l1_s0.mesh").write_text("vem-poly-mesh 1\n3 1\n0 0\n1 0\n")
    out = tmp_path / "s.csv"
    code = main(["study", "--family", "m2", "--levels", "1..2", "--degree", "1",
                 "--out", str(out), "--mesh-dir", str(meshes)])
    assert code == 2
    rows = list(csv.DictReader(out.open()))
    assert rows[0]["status"].startswith("error: MeshParseError")
    assert rows[1]["status"] == "ok"


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["study", "--family", "m9", "--levels", "1", "--degree", "1", "--out", "x.csv"])
    assert exc.value.code == 2


def test_unwritable_output(tmp_path):
    code = main(["study", "--family", "m1", "--levels", "1", "--degree", "1",
                 "--out", str(tmp_path / "missing" / "x.csv")])
    assert code == 2


def test_console_entry_point(tmp_path):
    out = tmp_path / "c.csv"
    res = subprocess.run([sys.executable, "-m", "stokes_vem.cli", "study", "--family", "m1",
                          "--levels", "1", "--degree", "2", "--out", str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert out.read_text().startswith("family,level,h,")
