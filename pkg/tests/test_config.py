#!/usr/bin/env python
"""
Tests de la carga y validación de configuraciones TOML planas
"""

from pathlib import Path

import pytest

from atmgrit.config import flatten, load_config, loads
from atmgrit.core import ConfigurationError
from atmgrit.problems import Heat1D

HEAT = """
problem.name = "heat1d"
problem.dof = 63
problem.n_points = 257
solver.m = 16
solver.k = 4
solver.tol = 1e-9
solver.relaxation = "FCF"
output.run_id = "heat-k4"
"""


def test_flatten_nested_tables():
    assert flatten({"solver": {"k": 12, "m": [2, 2]}, "problem": {"name": "heat1d"}}) == {
        "solver.k": 12, "solver.m": [2, 2], "problem.name": "heat1d",
    }


def test_dotted_keys_parse():
    cfg = loads(HEAT)
    assert cfg.problem == "heat1d"
    assert cfg.problem_params == {"dof": 63, "n_points": 257}
    assert cfg.solver.m == (16,) and cfg.solver.k == 4
    assert cfg.solver.relaxation == "FCF" and cfg.solver.cf_sweeps == 1
    assert cfg.solver.tol == 1e-9
    assert cfg.run_id == "heat-k4"
    app = cfg.application()
    assert isinstance(app, Heat1D) and app.vector_size == 63


def test_table_syntax_equivalent():
    tables = "[problem]\nname = \"heat1d\"\ndof = 63\nn_points = 257\n[solver]\nm = 16\nk = 4\n"
    cfg = loads(tables)
    assert cfg.solver.m == (16,) and cfg.problem_params["dof"] == 63


def test_defaults():
    cfg = loads('problem.name = "dahlquist"')
    assert cfg.solver.mode == "two-level"
    assert cfg.solver.m == (2,) and cfg.solver.k == 2
    assert cfg.solver.initial_guess.kind == "constant"
    assert cfg.output_path is None and cfg.db_path is None


def test_random_guess_and_outputs(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        'problem.name = "dahlquist"\nsolver.initial_guess = "random"\nsolver.seed = 5\n'
        f'output.path = "{(tmp_path / "out.csv").as_posix()}"\noutput.db = "{(tmp_path / "r.duckdb").as_posix()}"\n',
        encoding="utf-8",
    )
    cfg = load_config(path)
    assert cfg.solver.initial_guess.kind == "random" and cfg.solver.initial_guess.seed == 5
    assert cfg.output_path.name == "out.csv" and cfg.db_path.name == "r.duckdb"


def test_levels_expand_single_factor():
    cfg = loads('problem.name = "heat1d"\nproblem.fold_forcing = true\nsolver.mode = "multilevel-v"\n'
                "solver.m = 4\nsolver.levels = 3\n")
    assert cfg.solver.m == (4, 4)


def test_levels_mismatch():
    with pytest.raises(ConfigurationError, match="no coincide"):
        loads('problem.name = "heat1d"\nsolver.mode = "multilevel-v"\nsolver.m = [2, 2]\nsolver.levels = 4\n')


@pytest.mark.parametrize("text", [
    'problem.name = "heat1d"\nsolver.kk = 3\n',
    'problem.name = "heat1d"\nsolver.k = 0\n',
    'problem.name = "heat1d"\nsolver.tol = -1.0\n',
    'problem.name = "burgers"\n',
    'solver.k = 3\n',
    'problem.name = "heat1d"\nsolver.mode = "w-cycle"\n',
])
def test_schema_rejections(text):
    with pytest.raises(ConfigurationError):
        loads(text)


def test_foreign_problem_key():
    """Una clave válida de otro problema no se acepta"""
    with pytest.raises(ConfigurationError, match="feed"):
        loads('problem.name = "heat1d"\nproblem.feed = 0.03\n')


def test_malformed_toml():
    with pytest.raises(ConfigurationError, match="TOML"):
        loads('problem.name = "heat1d\n')


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "no_existe.toml")


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv("ATMGRIT_WORKERS", "3")
    assert loads('problem.name = "dahlquist"').workers == 3
    assert loads('problem.name = "dahlquist"\nruntime.workers = 2\n').workers == 2


EXPERIMENTS = Path(__file__).resolve().parent.parent / "experiments"


@pytest.mark.parametrize("name", ["heat_parareal", "heat_k_sweep", "heat_multilevel", "grayscott", "grayscott_3level"])
def test_experiment_configs_build_hierarchy(name):
    cfg = load_config(EXPERIMENTS / f"{name}.toml")
    h = cfg.solver.hierarchy(cfg.application().grid)
    assert h.n_levels == len(cfg.solver.m) + 1


def test_heat_parareal_experiment_window_covers_coarse_grid():
    """2048 puntos con m=64: 31 pasos gruesos, 32 puntos, k = 32"""
    cfg = load_config(EXPERIMENTS / "heat_parareal.toml")
    h = cfg.solver.hierarchy(cfg.application().grid)
    assert h.n_coarse == 32
    assert cfg.solver.k == h.n_coarse and h.is_parareal


def test_grayscott_three_level_experiment():
    cfg = load_config(EXPERIMENTS / "grayscott_3level.toml")
    h = cfg.solver.hierarchy(cfg.application().grid)
    assert cfg.solver.mode == "nested-v" and cfg.solver.m == (16, 4)
    assert [lvl.n_points for lvl in h.levels] == [512, 32, 8]
    assert cfg.workers <= h.n_coarse
