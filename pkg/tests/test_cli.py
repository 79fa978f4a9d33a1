import csv
import json
import subprocess
import sys

import pytest

from fracseg.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main, parse_config_text
from fracseg.errors import ConfigurationError


def test_parse_config_text():
    cfg = parse_config_text("mode = asymptotics  # comment\ns = 0.75\n"
                            "solver.schedule = 1, 2, 3\ngrid.t_max = 10\n\nfit.inner = 0.25\n")
    assert cfg == {"mode": "asymptotics", "s": 0.75, "solver": {"schedule": (1, 2, 3)},
                   "grid": {"t_max": 10}, "fit": {"inner": 0.25}}
    with pytest.raises(ConfigurationError):
        parse_config_text("no equals sign")
    with pytest.raises(ConfigurationError):
        parse_config_text("grid..n_t = 3")


def test_spectrum_mode(tmp_path):
    out = tmp_path / "spec"
    code = main(["--mode", "spectrum", "--out", str(out), "--set", "s=0.75",
                 "--set", "spectrum.n_theta=1024"])
    assert code == EXIT_OK
    rows = list(csv.DictReader(open(out / "eigen.csv")))
    lam1 = {float(r["lambda"]) for r in rows if r["j"] == "1"}
    assert len(lam1) == 1 and lam1.pop() == pytest.approx(0.1875, abs=1e-6)
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["s"] == 0.75 and cfg["mode"] == "spectrum"


@pytest.mark.parametrize("extra", [["--set", "s=1.2"], ["--set", "solver.damping=0"],
                                   ["--set", "bogus=1"], ["--set", "grid.n_x=3"],
                                   ["--set", "suite.criteria=13"]])
def test_invalid_configuration_exits_2_and_writes_nothing(tmp_path, extra, capsys):
    out = tmp_path / "bad"
    assert main(["--mode", "profile", "--out", str(out)] + extra) == EXIT_CONFIG
    assert not out.exists()
    assert "invalid configuration" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    assert main(["--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path / "o")]) == 2


def test_numerical_failure_exits_3_with_diagnostics(tmp_path):
    out = tmp_path / "fail"
    code = main(["--mode", "profile", "--resolution", "coarse", "--out", str(out),
                 "--set", "solver.max_iter=1"])
    assert code == EXIT_NUMERICAL
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "SolverError" and err["report"]["iterations"] >= 1


def test_profile_runs_are_deterministic(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mode = profile\ns = 0.5\nresolution = coarse\n")
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert main(["--config", str(cfg), "--out", str(o)]) == EXIT_OK
    names = sorted(p.name for p in outs[0].iterdir())
    assert {"u.txt", "v.txt", "u.csv", "v.csv", "report.json", "config.json",
            "timings.json"} <= set(names)
    for name in names:
        if name in ("config.json", "timings.json"):
            continue
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    report = json.loads((outs[0] / "report.json").read_text())
    assert report["converged"] and "seconds" not in report


def test_module_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "fracseg", "--help"], capture_output=True,
                         text=True, check=True)
    assert "--mode" in res.stdout and "--config" in res.stdout
