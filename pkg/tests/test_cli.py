import json
from pathlib import Path

import pytest

from magnetohom import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_shipped_configs(capsys):
    for path in sorted(CONFIGS.glob("*.json")):
        code, _, err = run(capsys, "validate", "-c", str(path))
        assert code == 0, (path.name, err)


@pytest.mark.parametrize("name,needle", [("ball_radius_half.json", "SeparationViolated"),
                                         ("negative_mu0.json", "mu0"),
                                         ("unknown_key.json", "solver")])
def test_invalid_configs_exit_2(capsys, name, needle):
    code, _, err = run(capsys, "validate", "-c", str(CONFIGS / "invalid" / name))
    assert code == 2
    rec = json.loads(err.strip().splitlines()[-1])
    assert set(rec) == {"level", "stage", "message"} and needle in rec["message"]


def test_unreadable_config_exit_2(capsys, tmp_path):
    code, _, _ = run(capsys, "eval", "-c", str(tmp_path / "missing.json"))
    assert code == 2


def test_eval_origin(capsys, tmp_path):
    code, out, _ = run(capsys, "eval", "-c", str(CONFIGS / "ex1_ball.json"), "--out", str(tmp_path))
    assert code == 0
    assert json.loads(out.strip()) == {"fhom": 0.0, "k_used": 1}
    assert (tmp_path / "ex1_ball.csv").exists() and (tmp_path / "ex1_ball_beta.png").exists()


def test_table_override_and_header(capsys, tmp_path):
    code, _, _ = run(capsys, "table", "-c", str(CONFIGS / "ex1_table.json"), "--out", str(tmp_path),
                     "--set", "numerics.N=8", "--set", "grid.G_values=[0, 1]",
                     "--set", "grid.B_values=[0]", "--threads", "1")
    assert code == 0
    lines = (tmp_path / "ex1_table.csv").read_text().splitlines()
    assert lines[0] == "G11,G12,G13,G21,G22,G23,G31,G32,G33,B1,B2,B3,fhom,k_used,grad_norm"
    assert len(lines) == 1 + 8
    report = json.loads((tmp_path / "ex1_table.json").read_text())
    assert report["growth"]["passed"]


def test_reruns_are_byte_identical(capsys, tmp_path):
    args = ["table", "-c", str(CONFIGS / "ex1_table.json"), "--set", "numerics.N=8",
            "--set", "grid.G_values=[-1, 1]", "--set", "grid.B_values=[1]", "--threads", "1"]
    run(capsys, *args, "--out", str(tmp_path / "a"))
    run(capsys, *args, "--out", str(tmp_path / "b"))
    for name in ("ex1_table.csv", "ex1_table.json", "ex1_table.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_audit_strict_violation_exit_4(capsys, tmp_path):
    cfg = str(CONFIGS / "audit_violating.json")
    assert run(capsys, "audit", "-c", cfg, "--out", str(tmp_path))[0] == 0
    assert run(capsys, "audit", "-c", cfg, "--out", str(tmp_path), "--strict")[0] == 4


def test_nonconvergence_exit_3(capsys, tmp_path):
    code, _, err = run(capsys, "eval", "-c", str(CONFIGS / "ex1_points.json"), "--out", str(tmp_path),
                       "--set", "numerics.max_iters=1", "--set", "numerics.N=8")
    assert code == 3
    assert json.loads(err.strip().splitlines()[-1])["stage"] == "solve"


def test_project_command(capsys, tmp_path):
    code, out, _ = run(capsys, "project", "-c", str(CONFIGS / "project.json"), "--out", str(tmp_path),
                       "--set", "project.count=5", "--set", "project.N=8")
    assert code == 0
    rep = json.loads((tmp_path / "project.json").read_text())
    assert rep["passed"] and rep["count"] == 5


def test_fenchel_command(capsys, tmp_path):
    code, _, _ = run(capsys, "fenchel", "-c", str(CONFIGS / "fenchel_prototype.json"), "--out", str(tmp_path),
                     "--set", "fenchel.bounds_samples=10")
    assert code == 0
    lines = (tmp_path / "fenchel_prototype.csv").read_text().splitlines()
    assert lines[0].startswith("G1,B1,B2,B3,value,M1,M2,M3") and lines[0].endswith("kkt_residual")
    # prototype at |G| = 1, B = 0 has conjugate -3/4
    assert float(lines[2].split(",")[4]) == pytest.approx(-0.75, abs=1e-8)


def test_bad_override_exit_2(capsys, tmp_path):
    code, _, _ = run(capsys, "eval", "-c", str(CONFIGS / "ex1_ball.json"), "--set", "numerics.N=12")
    assert code == 2
    code, _, _ = run(capsys, "eval", "-c", str(CONFIGS / "ex1_ball.json"), "--set", "novalue")
    assert code == 2
