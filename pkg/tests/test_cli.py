#!/usr/bin/env python
"""
Tests de punta a punta de la CLI: códigos de salida y archivos generados
"""

import numpy as np
import pandas as pd
import pytest

from atmgrit import cli
from atmgrit.core import RuntimeFault

# λ cercano a 0: Φ^m ≈ Ψ y la convergencia la dicta el alcance de k
DAHLQUIST = """
problem.name = "dahlquist"
problem.lam = -0.05
solver.m = 4
solver.k = 2
solver.tol = 1e-8
solver.max_iters = 40
output.run_id = "dq"
"""


@pytest.fixture
def config(tmp_path):
    def write(text, name="run.toml"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return write


def test_solve_writes_history(tmp_path, config):
    out = tmp_path / "res" / "dq.csv"
    code = cli.main(["-q", "solve", "--config", config(DAHLQUIST), "--out", str(out)])
    assert code == cli.EXIT_OK
    history = pd.read_csv(out)
    assert list(history.columns) == ["iter", "residual_norm", "seconds"]
    assert history["residual_norm"].iloc[-1] <= 1e-8
    summary = pd.read_csv(tmp_path / "res" / "dq.summary.csv")
    assert bool(summary["converged"].iloc[0])
    assert summary["iterations"].iloc[0] == len(history)


def test_solve_not_converged_exit_code(tmp_path, config):
    text = DAHLQUIST.replace("solver.max_iters = 40", "solver.max_iters = 1")
    code = cli.main(["-q", "solve", "--config", config(text), "--out", str(tmp_path / "h.csv")])
    assert code == cli.EXIT_NOT_CONVERGED


def test_malformed_config_writes_nothing(tmp_path, config):
    out = tmp_path / "nada.csv"
    code = cli.main(["solve", "--config", config('problem.name = "heat1d"\nsolver.k = 0\n'), "--out", str(out)])
    assert code == cli.EXIT_CONFIG
    assert not out.exists()


def test_invalid_workers_flag(tmp_path, config):
    code = cli.main(["solve", "--config", config(DAHLQUIST), "--workers", "0", "--out", str(tmp_path / "x.csv")])
    assert code == cli.EXIT_CONFIG


def test_solve_parallel(tmp_path, config):
    out = tmp_path / "p.csv"
    assert cli.main(["-q", "solve", "--config", config(DAHLQUIST), "--workers", "3", "--out", str(out)]) == 0
    serial = tmp_path / "s.csv"
    assert cli.main(["-q", "solve", "--config", config(DAHLQUIST), "--out", str(serial)]) == 0
    assert pd.read_csv(out)["residual_norm"].tolist() == pd.read_csv(serial)["residual_norm"].tolist()


def test_runtime_fault_exit_code(tmp_path, config, monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeFault("rank 1 sin respuesta", ranks=(1,))

    monkeypatch.setattr(cli, "run_parallel", broken)
    code = cli.main(["solve", "--config", config(DAHLQUIST), "--workers", "2", "--out", str(tmp_path / "f.csv")])
    assert code == cli.EXIT_FAULT


def test_unexpected_error_exit_code(tmp_path, config, monkeypatch):
    def broken(*args, **kwargs):
        raise KeyError("u")

    monkeypatch.setattr(cli, "run_parallel", broken)
    out = tmp_path / "e.csv"
    code = cli.main(["-q", "solve", "--config", config(DAHLQUIST), "--workers", "2", "--out", str(out)])
    assert code == cli.EXIT_INTERNAL
    assert not out.exists()


def test_theory_rows_respect_bound(tmp_path, config):
    text = """
problem.name = "dahlquist"
theory.source = "grid"
theory.lambda = [0.5, 0.9, -0.7]
theory.mu = [0.3, 0.8, 1.2]
theory.m = [2, 4]
theory.k = [2, 3]
theory.size = 16
"""
    out = tmp_path / "theory.csv"
    assert cli.main(["-q", "theory", "--config", config(text), "--out", str(out)]) == cli.EXIT_OK
    rows = pd.read_csv(out)
    # μ = 1.2 se omite: 3×2 pares por cada (m, k)
    assert len(rows) == 6 * 4
    assert (rows["norm_Ecc"] <= rows["bound"] * (1 + 1e-12)).all()
    assert set(rows["k"]) == {2, 3}


def test_theory_random_source(tmp_path, config):
    text = ('problem.name = "dahlquist"\ntheory.source = "random"\ntheory.samples = 50\n'
            "theory.complex = true\ntheory.m = 8\ntheory.k = 4\n")
    out = tmp_path / "random.csv"
    assert cli.main(["-q", "theory", "--config", config(text), "--out", str(out)]) == cli.EXIT_OK
    assert len(pd.read_csv(out)) == 50


def test_sweep_k_reach(tmp_path, config):
    """k=1 necesita más iteraciones que k=2; k = N_T+1 se marca como Parareal"""
    text = DAHLQUIST + "sweep.k = [1, 2]\nsweep.include_parareal = true\n"
    out = tmp_path / "sweep.csv"
    assert cli.main(["-q", "sweep-k", "--config", config(text), "--out", str(out)]) == cli.EXIT_OK
    rows = pd.read_csv(out).set_index("k")
    assert list(rows.index) == [1, 2, 17]
    assert rows.loc[1, "iterations"] > rows.loc[2, "iterations"]
    assert rows.loc[17, "iterations"] <= rows.loc[2, "iterations"]
    assert rows["parareal_equivalent"].tolist() == [False, False, True]
    assert rows.loc[17, "k_over_ncpoints"] == 1.0


def test_propagator_matrix(tmp_path, config):
    text = ('problem.name = "dahlquist"\ntheory.operator = "E_e"\ntheory.phi = 0.5\n'
            "theory.m = 2\ntheory.k = 2\ntheory.n_steps = 8\n")
    out = tmp_path / "E.csv"
    assert cli.main(["propagator", "--config", config(text), "--out", str(out)]) == cli.EXIT_OK
    matrix = pd.read_csv(out, header=None).to_numpy()
    assert matrix.shape == (9, 9)
    assert matrix[4, 0] == 0.5**4 and matrix[7, 2] == 0.5**5
    assert np.count_nonzero(matrix) == 5


def test_report_from_db(tmp_path, config):
    db = tmp_path / "runs.duckdb"
    text = DAHLQUIST + f'output.db = "{db.as_posix()}"\n'
    assert cli.main(["-q", "solve", "--config", config(text), "--out", str(tmp_path / "dq.csv")]) == 0
    assert (tmp_path / "dq.parquet").exists()

    md = tmp_path / "reports" / "summary.md"
    assert cli.main(["-q", "report", "--db", str(db), "--out", str(md)]) == cli.EXIT_OK
    content = md.read_text(encoding="utf-8")
    assert "Hallazgos Clave" in content
    assert "dq ✅" in content


def test_report_missing_db(tmp_path):
    assert cli.main(["report", "--db", str(tmp_path / "no.duckdb")]) == cli.EXIT_CONFIG
