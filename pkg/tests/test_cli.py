import json

import pytest

from sdgame import __version__
from sdgame.cli import run


def read(path):
    return json.loads(path.read_text())


def test_solve_ex51(tmp_path):
    out = tmp_path / "solve"
    assert run(["solve", "--example", "ex51", "--grid=-1,1,81", "--out", str(out)]) == 0
    summary = read(out / "summary.json")
    assert summary["max_error"] <= 2e-2
    assert (out / "field.csv").read_text().startswith("t,x,W")
    manifest = read(out / "manifest.json")
    assert manifest["code_version"] == __version__ and manifest["seed"] == 0
    assert manifest["config"]["problem"]["name"] == "ex51"
    assert manifest["argv"][0] == "solve"


def test_mixed_regime_exits_one(tmp_path, capsys):
    code = run(["validate", "--example", "ex53", "--vartheta", "0.5", "--varsigma", "2",
                "--out", str(tmp_path)])
    assert code == 1
    assert "mixed regime" in capsys.readouterr().err


def test_cfl_violation_exits_two(tmp_path, capsys):
    code = run(["solve", "--example", "ex51", "--grid=-2,2,401,100", "--out", str(tmp_path)])
    assert code == 2
    assert "CFL" in capsys.readouterr().err


def test_bad_config_exits_one(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"problem": {"example": "ex51"}, "solverz": {}}))
    assert run(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "solverz" in capsys.readouterr().err
    cfg.write_text(json.dumps({"problem": {"drift": "u", "diffusion": 1.0, "generator": 0,
                                           "T": 1.0, "U": [{"lo": 0, "hi": 1, "points": 2}],
                                           "V": [{"lo": 0, "hi": 1, "points": 2}]}}))
    assert run(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "terminal" in capsys.readouterr().err


def test_config_driven_solve(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "problem": {"drift": "u", "diffusion": "v", "generator": {"neg": "y"},
                    "terminal": {"abs": "x"}, "T": 0.5,
                    "U": [{"lo": -1, "hi": 1, "points": 3}],
                    "V": [{"lo": 0.5, "hi": 1, "points": 2}], "theta": 0.0},
        "grid": {"x_lo": -1, "x_hi": 1, "N_x": 41}}))
    assert run(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert read(tmp_path / "summary.json")["grid"]["N_x"] == 41


def test_summary_is_byte_identical(tmp_path):
    argv = ["bsde", "--example", "ex52", "--u", "0.5", "--v", "-0.5", "--paths", "300",
            "--steps", "20", "--seed", "4"]
    assert run(argv + ["--out", str(tmp_path / "a")]) == 0
    assert run(argv + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "summary.json").read_bytes()
    assert a == (tmp_path / "b" / "summary.json").read_bytes()
    assert read(tmp_path / "a" / "summary.json")["seed"] == 4


def test_hamiltonian_probe(tmp_path, capsys):
    code = run(["hamiltonian", "probe", "--example", "ex51", "--x", "1", "--y", "0.5",
                "--p", "1", "--A", "1", "--out", str(tmp_path)])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["value"] == 0.0


@pytest.mark.parametrize("command,extra", [
    ("dpp-residual", ["--grid=-1,1,41"]),
    ("diagnose", ["--grid=-1,1,41"]),
    ("transform-study", ["--no-fields", "--samples", "1024", "--m", "2,4", "--k", "1"]),
    ("saddle", ["--grid=-1,1,41", "--paths", "200", "--steps", "20", "--deviations", "2"]),
    ("validate", []),
])
def test_other_commands_run(tmp_path, command, extra):
    assert run([command, "--example", "ex51", "--out", str(tmp_path)] + extra) == 0
    assert read(tmp_path / "summary.json")["command"] == command


def test_unknown_param_exits_one(tmp_path):
    assert run(["solve", "--example", "ex51", "--param", "nonsense=1",
                "--out", str(tmp_path)]) == 1
