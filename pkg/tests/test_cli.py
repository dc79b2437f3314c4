import csv
import json

import pytest

from epsheath.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, cli_main

TINY = """
[params]
final_time = 0.01
[grid]
length = 1.0
bulk_dx = 0.005
[experiment]
eps_sweep = 0.02, 0.01, 0.005
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.ini"
    path.write_text(TINY)
    return path


def test_profile(tmp_path, capsys):
    out = tmp_path / "p"
    code = cli_main(["profile", "--Ti", "1", "--u3", "-2", "--phi0", "0.1", "--out", str(out), "--check"])
    assert code == EXIT_OK
    rows = list(csv.reader((out / "profile.csv").open()))
    assert rows[0] == ["z", "Phi0", "N0", "U03", "Phi1"]
    rep = json.loads((out / "report.json").read_text())
    assert rep["gamma_formula"] == pytest.approx(0.816497, abs=1e-6)
    assert rep["gamma_relative_difference"] < 0.03
    assert "PASS" in capsys.readouterr().out


def test_profile_figure(tmp_path):
    out = tmp_path / "f"
    assert cli_main(["profile", "--out", str(out), "--figures"]) == EXIT_OK
    assert (out / "profile.png").stat().st_size > 0


def test_no_figures_by_default(tmp_path):
    out = tmp_path / "nf"
    assert cli_main(["profile", "--out", str(out)]) == EXIT_OK
    assert not list(out.glob("*.png"))


def test_missing_config(tmp_path):
    assert cli_main(["converge", "--config", str(tmp_path / "nope.ini")]) == EXIT_CONFIG


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["profile", "--u3", "abc"]])
def test_bad_arguments(argv):
    assert cli_main(argv) == EXIT_CONFIG


def test_solver_error(tmp_path):
    # subsonic trace: no sheath profile exists
    assert cli_main(["profile", "--u3", "-1.2", "--out", str(tmp_path)]) == EXIT_SOLVER


def test_check_failure(tmp_path):
    # a large diagonal shift removes positivity although the trace satisfies Bohm
    assert cli_main(["stability", "--mu", "10", "--check", "--out", str(tmp_path)]) == EXIT_CHECK


def test_stability(tmp_path, capsys):
    assert cli_main(["stability", "--check", "--out", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["M_A"]["minors"] == pytest.approx([2, 4, 8, 12, 16])
    assert rep["M_C"]["positive"]
    assert cli_main(["stability", "--u3", "-1.2", "--check", "--out", str(tmp_path)]) == EXIT_OK
    assert not json.loads((tmp_path / "report.json").read_text())["M_A"]["positive"]


def test_classify(tmp_path, capsys):
    assert cli_main(["classify", "--out", str(tmp_path)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "Density, Potential and Velocity" in text and "No boundary layer" in text
    assert len(json.loads((tmp_path / "report.json").read_text())["rows"]) == 4


@pytest.mark.parametrize("command", ["solve", "limit"])
def test_runs(command, tiny_config, tmp_path):
    out = tmp_path / command
    code = cli_main([command, "--config", str(tiny_config), "--eps", "0.02", "--out", str(out), "--check"])
    assert code == EXIT_OK
    header = (out / "snapshots.csv").read_text().splitlines()[0]
    assert header == "t,x3,n,u1,u2,u3,phi"
    rep = json.loads((out / "report.json").read_text())
    assert rep["final_time"] == pytest.approx(0.01)


def test_converge_outputs_are_reproducible(tiny_config, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"c{k}"
        code = cli_main(["converge", "--config", str(tiny_config), "--out", str(out)])
        assert code == EXIT_OK
        outs.append(out)
    for name in ("rates.csv", "report.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    header = (outs[0] / "rates.csv").read_text().splitlines()[0]
    assert header == "eps,err_L2_n,err_L2_u,err_Linf_raw,err_Linf_corrected"


def test_residual(tiny_config, tmp_path):
    cfg = tmp_path / "r.ini"
    cfg.write_text(TINY.replace("0.02, 0.01, 0.005", "0.02, 0.01") + "residual_time = 0.005\n")
    assert cli_main(["residual", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "residual.csv").read_text().startswith("eps,order,residual_L2,eps_dR_over_R")


def test_bad_config_value(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[params]\nepsilon = -3\n")
    assert cli_main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
