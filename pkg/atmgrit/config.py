"""Configuración de corridas: TOML plano con claves punteadas validado con jsonschema.

Ejemplo::

    problem.name = "heat1d"
    problem.dof = 257
    solver.m = 64
    solver.k = 12
    solver.tol = 1e-7
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from atmgrit.core import Application, ConfigurationError, Norm
from atmgrit.problems import PROBLEMS, make_application
from atmgrit.runtime import default_workers
from atmgrit.solver import InitialGuess, SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

_INT = {"type": "integer"}
_POS_INT = {"type": "integer", "minimum": 1}
_NUM = {"type": "number"}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_BOOL = {"type": "boolean"}
_STR = {"type": "string"}
_NUM_LIST = {"type": "array", "items": _NUM, "minItems": 1}
_INT_OR_LIST = {"oneOf": [_POS_INT, {"type": "array", "items": _POS_INT, "minItems": 1}]}

_PY_TYPES = {int: _INT, float: _NUM, bool: _BOOL, str: _STR}


def _problem_properties() -> dict[str, dict]:
    props: dict[str, dict] = {}
    for _, spec_cls in PROBLEMS.values():
        for f in dataclasses.fields(spec_cls):
            kind = f.type if isinstance(f.type, type) else {"int": int, "float": float, "bool": bool}[f.type]
            props[f"problem.{f.name}"] = _PY_TYPES[kind]
    return props


SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["problem.name"],
    "properties": {
        "problem.name": {"enum": sorted(PROBLEMS)},
        **_problem_properties(),
        "solver.mode": {"enum": ["two-level", "multilevel-v", "nested-v"]},
        "solver.levels": {"type": "integer", "minimum": 2},
        "solver.m": _INT_OR_LIST,
        "solver.k": _POS_INT,
        "solver.relaxation": {"enum": ["F", "FCF"]},
        "solver.nu": _POS_INT,
        "solver.max_iters": _POS_INT,
        "solver.tol": _POS_NUM,
        "solver.seed": {"type": "integer", "minimum": 0},
        "solver.initial_guess": {"enum": ["random", "constant"]},
        "solver.initial_value": _NUM,
        "solver.coarse_substeps": _POS_INT,
        "solver.norm": {"enum": ["residual", "functional"]},
        "runtime.workers": _POS_INT,
        "runtime.timeout": _POS_NUM,
        "sweep.k": {"type": "array", "items": _POS_INT, "minItems": 1},
        "sweep.m": {"type": "array", "items": _POS_INT, "minItems": 1},
        "sweep.include_parareal": _BOOL,
        "theory.source": {"enum": ["grid", "random", "heat"]},
        "theory.lambda": _NUM_LIST,
        "theory.mu": _NUM_LIST,
        "theory.exact_coarse": _BOOL,
        "theory.m": _INT_OR_LIST,
        "theory.k": _INT_OR_LIST,
        "theory.size": _POS_INT,
        "theory.samples": _POS_INT,
        "theory.seed": {"type": "integer", "minimum": 0},
        "theory.complex": _BOOL,
        "theory.dof": _POS_INT,
        "theory.dt": _POS_NUM,
        "theory.phi": _NUM,
        "theory.psi": _NUM,
        "theory.n_steps": _POS_INT,
        "theory.operator": {"enum": ["E_e", "E_a", "E_cc"]},
        "output.path": _STR,
        "output.db": _STR,
        "output.run_id": _STR,
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def flatten(tree: dict, prefix: str = "") -> dict[str, Any]:
    """{"solver": {"k": 12}} → {"solver.k": 12}"""
    flat: dict[str, Any] = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def validate(flat: dict[str, Any]) -> None:
    errors = sorted(_VALIDATOR.iter_errors(flat), key=lambda e: list(e.path))
    if errors:
        lines = [f"{'.'.join(map(str, e.path)) or '<raíz>'}: {e.message}" for e in errors]
        raise ConfigurationError("configuración inválida:\n  " + "\n  ".join(lines))

    name = flat["problem.name"]
    allowed = {f.name for f in dataclasses.fields(PROBLEMS[name][1])}
    foreign = sorted(k for k in flat if k.startswith("problem.") and k != "problem.name"
                     and k.removeprefix("problem.") not in allowed)
    if foreign:
        raise ConfigurationError(f"claves no válidas para {name}: {', '.join(foreign)}")


def _as_list(value) -> list:
    return list(value) if isinstance(value, (list, tuple)) else [value]


@dataclass
class RunConfig:
    problem: str
    problem_params: dict[str, Any]
    solver: SolverConfig
    workers: int = 1
    timeout: float = 60.0
    output_path: Path | None = None
    db_path: Path | None = None
    run_id: str = "run"
    sweep_k: list[int] = field(default_factory=list)
    sweep_m: list[int] = field(default_factory=list)
    include_parareal: bool = True
    theory: dict[str, Any] = field(default_factory=dict)

    def application(self) -> Application:
        return make_application(self.problem, self.problem_params)

    @classmethod
    def from_flat(cls, flat: dict[str, Any]) -> RunConfig:
        validate(flat)
        get = flat.get

        levels = get("solver.levels")
        m = _as_list(get("solver.m", 2))
        if len(m) == 1 and levels is not None:
            m = m * (levels - 1)
        if levels is not None and len(m) != levels - 1:
            raise ConfigurationError(f"solver.levels={levels} no coincide con {len(m)} factores en solver.m")

        guess_kind = get("solver.initial_guess", "constant")
        guess = (InitialGuess.random(get("solver.seed", 0)) if guess_kind == "random"
                 else InitialGuess.constant(get("solver.initial_value", 0.0)))

        solver = SolverConfig(
            mode=get("solver.mode", "two-level"),
            m=tuple(m),
            k=get("solver.k", 2),
            relaxation=get("solver.relaxation", "F"),
            nu=get("solver.nu", 1),
            max_iters=get("solver.max_iters", 50),
            tol=get("solver.tol", 1e-7),
            norm=Norm(get("solver.norm", "residual")),
            initial_guess=guess,
            coarse_substeps=get("solver.coarse_substeps", 1),
        )
        path, db = get("output.path"), get("output.db")
        return cls(
            problem=flat["problem.name"],
            problem_params={k.removeprefix("problem."): v for k, v in flat.items()
                            if k.startswith("problem.") and k != "problem.name"},
            solver=solver,
            workers=get("runtime.workers", default_workers()),
            timeout=get("runtime.timeout", 60.0),
            output_path=Path(path) if path else None,
            db_path=Path(db) if db else None,
            run_id=get("output.run_id", "run"),
            sweep_k=list(get("sweep.k", [])),
            sweep_m=list(get("sweep.m", [])),
            include_parareal=get("sweep.include_parareal", True),
            theory={k.removeprefix("theory."): v for k, v in flat.items() if k.startswith("theory.")},
        )


def loads(text: str) -> RunConfig:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"TOML mal formado: {exc}") from exc
    return RunConfig.from_flat(flatten(tree))


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"no se pudo leer {path}: {exc}") from exc
    return loads(text)
