import csv
import json

import pytest

from csls.cli import main, parse_mode, parse_range
from csls.errors import ModelError
from conftest import PLANT


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["compile-whrt", "--constraint", "whrt:2/3:zero", "--plant", str(PLANT), "--out", str(root / "m")]) == 0
    assert main(["synthesize", "--model", str(root / "m" / "model.json"), "--out", str(root / "syn"),
                 "--no-reanalysis"]) == 0
    return root


def report(path):
    return json.loads((path / "report.json").read_text())


def test_compile_report(workdir):
    rep = report(workdir / "m")["report"]
    assert rep["edges"] == [[1, 1, 1], [1, 2, 2], [2, 1, 1]]
    assert rep["uncertain"] is True
    assert (workdir / "m" / "report.txt").read_text().startswith("constraint whrt:2/3:zero")


def test_synthesize_outputs(workdir):
    rep = report(workdir / "syn")
    assert rep["report"]["residuals_pass"] is True
    assert abs(rep["report"]["gamma"] - 3.6707) < 0.02 * 3.6707
    assert "seconds" in rep["diagnostics"]
    for name in ("controller.json", "certificate.json", "trace.csv"):
        assert (workdir / "syn" / name).exists()


def test_synthesis_report_is_deterministic(workdir, tmp_path):
    assert main(["synthesize", "--model", str(workdir / "m" / "model.json"), "--out", str(tmp_path),
                 "--no-reanalysis"]) == 0
    assert report(tmp_path)["report"] == report(workdir / "syn")["report"]


def test_validate_passes(workdir, tmp_path):
    rc = main(["validate", "--model", str(workdir / "m" / "model.json"),
               "--certificate", str(workdir / "syn" / "certificate.json"),
               "--controller", str(workdir / "syn" / "controller.json"),
               "--trials", "1", "--trajectory-csv", "--out", str(tmp_path)])
    assert rc == 0
    assert report(tmp_path)["report"]["passed"] is True
    header = next(csv.reader((tmp_path / "trajectory.csv").open()))
    assert header[:3] == ["t", "node", "label"]


def test_validate_corrupted_certificate_exits_3(workdir, tmp_path):
    cert = json.loads((workdir / "syn" / "certificate.json").read_text())
    key = next(k for k in cert["variables"] if k.startswith("Xt"))
    cert["variables"][key] = [[-v for v in row] for row in cert["variables"][key]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(cert))
    rc = main(["validate", "--model", str(workdir / "m" / "model.json"), "--certificate", str(bad),
               "--controller", str(workdir / "syn" / "controller.json"), "--trials", "1",
               "--out", str(tmp_path / "v")])
    assert rc == 3
    assert "FAIL block" in (tmp_path / "v" / "report.txt").read_text()


def test_analyze_robust(workdir, tmp_path):
    rc = main(["analyze", "--model", str(workdir / "m" / "model.json"),
               "--controller", str(workdir / "syn" / "controller.json"),
               "--mode", "fixed-delta:0.2", "--out", str(tmp_path)])
    assert rc == 0
    rep = report(tmp_path)["report"]
    assert rep["recipe"]["mode"] == "fixed-delta" and rep["gamma"] > 0
    rows = list(csv.reader((tmp_path / "residuals.csv").open()))
    assert rows[0] == ["tag", "sense", "eigenvalue", "margin", "pass"]


def test_sweep(workdir, tmp_path):
    rc = main(["sweep", "--model", str(workdir / "m" / "model.json"),
               "--controller", f"nominal={workdir / 'syn' / 'controller.json'}",
               "--sweep-delta=-0.2:0.2:0.2", "--out", str(tmp_path)])
    assert rc == 0
    rows = list(csv.reader((tmp_path / "sweep.csv").open()))
    assert rows[0] == ["delta", "nominal"]
    assert [float(r[0]) for r in rows[1:]] == [-0.2, 0.0, 0.2]


def test_lift(tmp_path):
    assert main(["lift", "--plant", str(PLANT), "--labels", "3", "--strategy", "hold", "--out", str(tmp_path)]) == 0
    lifted = json.loads((tmp_path / "lifted.json").read_text())
    assert sorted(lifted["systems"]) == ["1", "2", "3"]


def test_bad_constraint_exits_4(tmp_path):
    assert main(["compile-whrt", "--constraint", "whrt:0/3:zero", "--plant", str(PLANT), "--out", str(tmp_path)]) == 4


def test_missing_file_exits_4(tmp_path):
    assert main(["analyze", "--model", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 4


def test_uncontrollable_exits_2(tmp_path):
    plant = json.loads(PLANT.read_text())
    plant["Bu"] = [[0.0], [0.0]]
    plant["Du"] = [[0.0]]
    plant.pop("uncertainty")
    path = tmp_path / "plant.json"
    path.write_text(json.dumps(plant))
    assert main(["compile-whrt", "--constraint", "whrt:2/3:zero", "--plant", str(path), "--out", str(tmp_path / "m")]) == 0
    assert main(["synthesize", "--model", str(tmp_path / "m" / "model.json"), "--out", str(tmp_path / "s")]) == 2


def test_parse_helpers():
    assert parse_mode("fixed-delta:-0.1") == ("fixed-delta", -0.1)
    assert parse_mode("robust") == ("robust", None)
    assert parse_range("-0.2:0.2:0.1") == [-0.2, -0.1, 0.0, 0.1, 0.2]
    with pytest.raises(ModelError):
        parse_range("0:1")
