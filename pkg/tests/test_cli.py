import json

import numpy as np
import pytest

from tdfdot import cli
from tdfdot.diagnostics import DiagnosticReport
from tdfdot.grid import build_grid, read_field_csv, read_trace_csv

SMALL = ["--set", "grid.nx=9", "--set", "grid.dt=0.1", "--set", "grid.T=0.5"]


def run(argv):
    return cli.main(argv)


def test_forward_writes_trace(tmp_path, capsys):
    assert run(["forward", *SMALL, "--out-dir", str(tmp_path), "--trajectory"]) == 0
    g = build_grid(9, 9, 0.5, 0.1)
    tr = read_trace_csv(tmp_path / "trace_excitation.csv", g)
    assert tr.values.shape[0] == g.nt
    assert (tmp_path / "trajectory_excitation.csv").is_file()
    assert "norm" in capsys.readouterr().out


def test_synthesize_is_seeded(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    common = ["synthesize", *SMALL, "--set", "noise.delta_e=0.01", "--seed", "3"]
    assert run([*common, "--out-dir", str(a)]) == 0
    assert run([*common, "--out-dir", str(b)]) == 0
    assert (a / "data_e.csv").read_bytes() == (b / "data_e.csv").read_bytes()
    th = json.loads((a / "thresholds.json").read_text())
    assert th["seed"] == 3 and th["delta_abs_e"] > 0


def test_pipeline_then_report(tmp_path, capsys):
    argv = ["pipeline", *SMALL, "--set", "noise.delta_e=0.01", "--set", "noise.delta_em=0.01",
            "--set", "steps.max_outer=3", "--out-dir", str(tmp_path), "--no-images"]
    assert run(argv) == 0
    for name in ("report_step1.json", "report_step2.json", "summary.txt", "manifest.json"):
        assert (tmp_path / name).is_file()
    q, (nx, ny, _, _) = read_field_csv(tmp_path / "recon_mu_f.csv")
    assert (nx, ny) == (9, 9) and np.all(q >= 0)
    capsys.readouterr()
    assert run(["report", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 3 and out[1].startswith("1a")


def test_invert_with_external_data(tmp_path):
    assert run(["synthesize", *SMALL, "--set", "noise.delta_e=0.01", "--out-dir", str(tmp_path)]) == 0
    th = json.loads((tmp_path / "thresholds.json").read_text())
    argv = ["invert", *SMALL, "--set", "steps.max_outer=2", "--data", str(tmp_path / "data_e.csv"),
            "--delta-abs", str(th["delta_abs_e"]), "--out-dir", str(tmp_path)]
    assert run(argv) == 0
    rep = json.loads((tmp_path / "report_step1.json").read_text())
    assert rep["threshold"] == pytest.approx(1.05 * th["delta_abs_e"])


@pytest.mark.parametrize("argv", [
    ["forward", "--set", "bogus.key=1"],
    ["forward", "--set", "noequals"],
    ["forward", "--config", "/nonexistent.cfg"],
    ["invert", *SMALL, "--data", "x.csv"],
    ["report", "/nonexistent-run"],
    ["forward", "--set", "grid.nx=abc"],
])
def test_configuration_errors_exit_2(argv, tmp_path, capsys):
    assert run([*argv, "--out-dir", str(tmp_path)] if argv[0] != "report" else argv) == 2
    assert "error:" in capsys.readouterr().err


def test_failed_diagnostic_exits_4(monkeypatch, capsys):
    monkeypatch.setattr(cli, "run_diagnostic", lambda n: DiagnosticReport(n, False, {"x": 1.0}))
    assert run(["diagnose", "taylor-test"]) == 4
    assert "[FAIL] taylor-test" in capsys.readouterr().out


def test_passing_diagnostic_exits_0(capsys):
    assert run(["diagnose", "emission-consistency"]) == 0
    assert "[PASS]" in capsys.readouterr().out


def test_config_file_is_read(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("case.preset = 1b\ngrid.nx = 9\ngrid.dt = 0.1\ngrid.T = 0.5\n")
    assert run(["forward", "--config", str(cfg), "--kind", "combined", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "trace_combined.csv").is_file()
