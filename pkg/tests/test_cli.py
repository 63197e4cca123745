import subprocess
import sys

import numpy as np
import pytest

from qrdom import cli, fileio
from qrdom.config import ConfigError, RunConfig


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def problem1_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("p1")
    cfg = out / "run.cfg"
    cfg.write_text("# problem 1, coarse\nproblem = problem1\nnx = 16  # cells\nny = 16\n")
    assert run_cli("run", "-c", cfg, "--output-dir", out) == 0
    return out


def test_run_writes_artifacts(problem1_run):
    for name in ("psi0.csv", "psi1.csv", "psi2.csv", "trace.csv", "report.txt", "config.txt"):
        assert (problem1_run / name).exists()
    trace = fileio.read_csv_rows(problem1_run / "trace.csv")
    assert list(trace[0]) == ["l", "m_prev", "m_curr", "M", "F_psi0", "rel_change"]
    assert float(trace[-1]["rel_change"]) < 1e-5


def test_report_values_rederivable_from_fields(problem1_run):
    report = fileio.read_report(problem1_run / "report.txt")
    assert report["converged"] == "yes"
    for k in range(3):
        mesh, values = fileio.read_field_csv(problem1_run / f"psi{k}.csv")
        assert mesh.integrate(values) / mesh.area == float(report[f"F_psi{k}"])
    mesh, psi0 = fileio.read_field_csv(problem1_run / "psi0.csv")
    assert mesh.point_eval(psi0, 0.5, 0.5) == float(report["psi0(0.5,0.5)"])
    eps = float(report["l2_error_psi0"])
    assert 5.1e-3 / 3 <= eps <= 5.1e-3 * 3


def test_linecut(problem1_run, tmp_path):
    out = tmp_path / "cut.csv"
    assert run_cli("linecut", problem1_run / "psi0.csv", "--problem", "problem1", "-o", out) == 0
    rows = fileio.read_csv_rows(out)
    assert len(rows) == 201 and list(rows[0]) == ["t", "psi0", "exact"]
    mid = rows[100]
    assert float(mid["t"]) == 0.5
    assert float(mid["psi0"]) == pytest.approx(1.0, abs=1e-2)
    assert float(mid["exact"]) == pytest.approx(1.0, abs=1e-12)


def test_linecut_of_constant_field(tmp_path):
    from qrdom.mesh import build_mesh

    mesh = build_mesh(0, 1, 0, 1, 3, 5)
    fileio.write_field_csv(tmp_path / "c.csv", mesh, np.full(mesh.n_nodes, 0.25))
    assert run_cli("linecut", tmp_path / "c.csv", "-n", 11) == 0
    rows = fileio.read_csv_rows(tmp_path / "c_linecut.csv")
    assert len(rows) == 11 and {r["psi0"] for r in rows} == {"0.25"}


def test_linecut_missing_field_exit_2(tmp_path, capsys):
    assert run_cli("linecut", tmp_path / "nope.csv") == 2


def test_unknown_problem_exit_2(tmp_path, capsys):
    assert run_cli("run", "--problem", "problem9", "--output-dir", tmp_path) == 2
    err = capsys.readouterr().err
    assert "problem1" in err and "problem2" in err


def test_bad_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nx = many\n")
    assert run_cli("run", "-c", cfg) == 2
    cfg.write_text("colour = blue\n")
    assert run_cli("run", "-c", cfg) == 2
    assert run_cli("run", "-c", tmp_path / "missing.cfg") == 2
    assert run_cli("run", "--tol-inner", "-1") == 2
    assert run_cli("refine", "--levels", "8,4", "--output-dir", tmp_path) == 2


def test_cap_exceeded_exit_3_keeps_trace(tmp_path):
    out = tmp_path / "cap"
    code = run_cli(
        "run", "--problem", "problem2", "--sigma-s", "5", "--nx", 4, "--ny", 4,
        "--batch-size", 4, "--max-source-iterations", 2, "--output-dir", out,
    )
    assert code == 3
    assert len(fileio.read_csv_rows(out / "trace.csv")) == 2
    assert not (out / "report.txt").exists()


def test_refine_single_level(tmp_path, capsys):
    assert run_cli("refine", "--levels", 8, "--nx", 99, "--output-dir", tmp_path) == 0
    rows = fileio.read_csv_rows(tmp_path / "refine.csv")
    assert [r["cells"] for r in rows] == ["8x8", "exact"]
    assert float(rows[1]["psi0(0.1,0.1)"]) == pytest.approx(1.55902, abs=5e-6)
    assert (tmp_path / "mesh8" / "psi0.csv").exists()
    assert "exact" in (tmp_path / "refine.txt").read_text()


def test_sweep(tmp_path):
    assert run_cli(
        "sweep", "--problem", "problem2", "--sigma-s-list", "0.1,0.9", "--nx", 8, "--ny", 8,
        "--tol-outer", "1e-3", "--output-dir", tmp_path,
    ) == 0
    rows = fileio.read_csv_rows(tmp_path / "sweep.csv")
    assert [float(r["sigma_s"]) for r in rows] == [0.1, 0.9]
    for r in rows:
        assert float(r["F_psi0"]) == pytest.approx(float(r["F_psi0_exact"]), rel=5e-3)
    assert (tmp_path / "sigma_s-0.9" / "report.txt").exists()


def test_directions_dump(tmp_path, capsys):
    assert run_cli("directions", "-n", 2) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "i,j,s1,s2,s3" and len(lines) == 9
    i, j, s1, s2, s3 = (float(v) for v in lines[1].split(","))
    assert (i, j) == (1, 1) and s1 * s1 + s2 * s2 + s3 * s3 == pytest.approx(1, abs=1e-14)
    assert run_cli("directions", "-n", 3, "--start", 5, "--plain", "-o", tmp_path / "d.csv") == 0
    rows = fileio.read_csv_rows(tmp_path / "d.csv")
    assert rows[0]["i"] == "5" and len(rows) == 12


def test_config_overrides_and_dump(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("problem = problem2\nsigma_s = 2.5\nworkers = 2\n")
    config = RunConfig.from_file(cfg, {"nx": "12"})
    assert (config.problem, config.sigma_s, config.nx, config.workers) == ("problem2", 2.5, 12, 2)
    (tmp_path / "b.cfg").write_text(config.dump())
    assert RunConfig.from_file(tmp_path / "b.cfg") == config
    with pytest.raises(ConfigError):
        RunConfig(sequence="sobol")


def test_module_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "qrdom", "directions", "-n", "1"], capture_output=True, text=True, check=True
    )
    assert out.stdout.startswith("i,j,s1,s2,s3")
