import csv
import json

import numpy as np
import pytest

from cqed_stirap.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE, PRESETS, main


def _rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.reader(lines))


def _run(tmp_path, *argv):
    return main([*argv, "--out-dir", str(tmp_path)])


def test_missing_N_is_usage_error(tmp_path, capsys):
    assert _run(tmp_path, "spectrum") == EXIT_USAGE
    assert "'N'" in capsys.readouterr().err


def test_bad_preset_and_bad_value(tmp_path, capsys):
    assert _run(tmp_path, "spectrum", "--preset", "fig9") == EXIT_USAGE
    assert _run(tmp_path, "spectrum", "--N", "two") == EXIT_USAGE
    assert _run(tmp_path, "sweep", "--N", "2", "--set", "sweep.rate=-1") == EXIT_USAGE
    assert _run(tmp_path, "spectrum", "--N", "2", "--set", "nodot") == EXIT_USAGE
    assert _run(tmp_path, "frobnicate") == EXIT_USAGE


def test_presets_cover_every_figure():
    assert set(PRESETS) == {"fig1", "fig2", "fig3a", "fig3b", "fig4", "fig5", "fig6a"}


def test_spectrum_outputs_and_headers(tmp_path):
    code = _run(tmp_path, "spectrum", "--N", "3", "--g-c", "0.2", "--set", "grid.points=12")
    assert code == EXIT_OK
    text = (tmp_path / "spectrum.csv").read_text().splitlines()
    head = [l for l in text if l.startswith("#")]
    assert any("seed" in l for l in head) and any("g_c" in l for l in head)
    rows = _rows(tmp_path / "spectrum.csv")
    assert rows[0] == ["t_tilde", "nu", "energy"] and len(rows) == 1 + 12 * 16
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["exit_code"] == 0 and man["model"]["N"] == 3
    assert {"spectrum.csv", "sp_branch.csv", "route.csv"} <= set(man["files"])


def test_ini_config_and_override_order(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[model]\nN = 2\ng_c = 0.1\n[grid]\npoints = 5\n")
    out = tmp_path / "o"
    assert main(["spectrum", "--config", str(ini), "--g-c", "0.3", "--out-dir", str(out)]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["model"]["g_c"] == 0.3 and man["model"]["N"] == 2
    assert len(_rows(out / "spectrum.csv")) == 1 + 5 * 9


def test_missing_config_file(tmp_path):
    assert _run(tmp_path, "spectrum", "--config", str(tmp_path / "nope.ini")) == EXIT_USAGE


def test_lyapunov_run_is_deterministic(tmp_path):
    argv = ["lyapunov", "--N", "4", "--g-c", "0.2", "--set", "lyapunov.t_tildes=2.0",
            "--set", "lyapunov.M=50", "--set", "grid.points=40", "--seed", "3"]
    assert main(argv + ["--out-dir", str(tmp_path / "a")]) == EXIT_OK
    assert main(argv + ["--out-dir", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a/lyapunov.csv").read_bytes() == (tmp_path / "b/lyapunov.csv").read_bytes()


def test_otoc_command(tmp_path):
    code = _run(tmp_path, "otoc", "--N", "3", "--g-c", "0.2", "--set", "otoc.t_tildes=2.8",
                "--set", "otoc.nus=6", "--set", "otoc.index_base=1", "--set", "otoc.points=50",
                "--set", "otoc.t_max=10", "--set", "otoc.betas=1")
    assert code == EXIT_OK
    rows = _rows(tmp_path / "otoc.csv")
    assert rows[0] == ["t_tilde", "nu", "Kt", "O"] and len(rows) == 51 and rows[1][1] == "5"
    assert (tmp_path / "otoc_thermal.csv").exists()
    assert "fits" in json.loads((tmp_path / "otoc_summary.json").read_text())


def test_otoc_length_mismatch(tmp_path):
    assert _run(tmp_path, "otoc", "--N", "3", "--set", "otoc.t_tildes=2.8,3.0", "--set", "otoc.nus=1") == EXIT_USAGE


def test_sweep_and_purity_commands(tmp_path):
    assert _run(tmp_path, "sweep", "--N", "3", "--g-c", "0.2", "--set", "sweep.rate=0.05",
                "--set", "sweep.dt_tilde=1e-3", "--set", "sweep.projections=true", "--set", "sweep.stride=1000") == EXIT_OK
    rows = _rows(tmp_path / "sweep.csv")
    assert rows[0][:5] == ["Kt", "t_tilde", "n_a", "n_b", "n_c"]
    pops = np.array([[float(x) for x in r[2:6]] for r in rows[1:]])
    excitation = pops[:, :3].sum(axis=1) + pops[:, 3] + 0.5
    assert np.max(np.abs(excitation - 3)) < 1e-9
    assert (tmp_path / "projections.csv").exists()
    assert _run(tmp_path, "purity", "--N", "3", "--set", "purity.g_values=0,0.2", "--set", "grid.points=10") == EXIT_OK
    summ = json.loads((tmp_path / "purity_summary.json").read_text())
    assert summ["0"]["min_gamma"] == pytest.approx(1.0, abs=1e-9)


def test_efficiency_partial_failure(tmp_path):
    code = _run(tmp_path, "efficiency", "--set", "efficiency.N_list=0,1", "--set", "efficiency.rates=0.05",
                "--set", "efficiency.dt_tilde=1e-3")
    assert code == EXIT_PARTIAL
    rows = _rows(tmp_path / "efficiency.csv")
    assert rows[1][0] == "0" and rows[1][2] == "nan" and rows[2][3] == ""


def test_numerical_failure_exit_code(tmp_path):
    code = _run(tmp_path, "sweep", "--N", "3", "--g-c", "0.2", "--set", "sweep.rate=0.05",
                "--set", "sweep.dt_tilde=0.3", "--set", "sweep.verify=true")
    assert code == EXIT_NUMERICAL
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["error"].startswith("StepSizeError")
