"""Relajaciones, residuos, transferencias y ciclos AT-MGRIT (dos niveles y FAS multinivel).

Todos los núcleos reciben un ``ExecutionContext`` que dice qué puntos le
tocan al proceso que llama y cómo intercambiar datos. El contexto serial es
dueño de todo y no comunica nada; el runtime paralelo usa el mismo código con
un contexto por rank, así la aritmética es idéntica en ambos casos.
"""

from __future__ import annotations

import logging
import math
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np
import pandas as pd

from atmgrit.core import (
    Application,
    ConfigurationError,
    DivergenceError,
    Norm,
    StateVector,
    difference,
    random_state,
)
from atmgrit.grids import Hierarchy, LocalCoarseGrid, TimeGrid, build_hierarchy

log = logging.getLogger(__name__)
timing_log = logging.getLogger("atmgrit.runtime.timing")

Mode = Literal["two-level", "multilevel-v", "nested-v"]
Relaxation = Literal["F", "FCF"]


# =====================================================
# Configuración y reporte
# =====================================================

@dataclass(frozen=True)
class InitialGuess:
    """random(seed) | constant(value) | provided(values)"""

    kind: Literal["random", "constant", "provided"] = "constant"
    seed: int = 0
    value: float = 0.0
    values: tuple[StateVector, ...] | None = None

    @classmethod
    def random(cls, seed: int) -> InitialGuess:
        return cls(kind="random", seed=seed)

    @classmethod
    def constant(cls, value: float = 0.0) -> InitialGuess:
        return cls(kind="constant", value=value)

    @classmethod
    def provided(cls, values: Sequence[StateVector]) -> InitialGuess:
        return cls(kind="provided", values=tuple(values))

    def vector(self, app: Application, i: int) -> StateVector:
        if self.kind == "random":
            return random_state(self.seed, app.vector_size, point=i)
        if self.kind == "provided":
            assert self.values is not None
            return self.values[i].clone()
        return app.zeros().fill(self.value)


@dataclass(frozen=True)
class SolverConfig:
    mode: Mode = "two-level"
    m: tuple[int, ...] = (2,)
    k: int = 2
    relaxation: Relaxation = "F"
    nu: int = 1
    max_iters: int = 50
    tol: float = 1e-7
    norm: Norm = field(default_factory=Norm)
    initial_guess: InitialGuess = field(default_factory=InitialGuess)
    coarse_substeps: int = 1

    def __post_init__(self):
        if self.mode not in ("two-level", "multilevel-v", "nested-v"):
            raise ConfigurationError(f"modo desconocido: {self.mode!r}")
        if self.relaxation not in ("F", "FCF"):
            raise ConfigurationError(f"relajación desconocida: {self.relaxation!r}")
        if self.relaxation == "FCF" and self.nu < 1:
            raise ConfigurationError(f"FCF requiere ν ≥ 1 (ν={self.nu})")
        if not self.tol > 0:
            raise ConfigurationError(f"tol={self.tol} debe ser positiva")
        if self.max_iters < 1:
            raise ConfigurationError(f"max_iters={self.max_iters} debe ser ≥ 1")
        if self.mode == "two-level" and len(self.m) != 1:
            raise ConfigurationError("el modo two-level usa exactamente un factor m")

    @property
    def cf_sweeps(self) -> int:
        return self.nu if self.relaxation == "FCF" else 0

    def hierarchy(self, grid: TimeGrid) -> Hierarchy:
        return build_hierarchy(grid, self.m, self.k)


@dataclass
class ConvergenceReport:
    residual_norms: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stop_reason: str = ""
    timings: dict[str, float] = field(default_factory=dict)
    iteration_seconds: list[float] = field(default_factory=list)
    initial_norm: float | None = None

    @property
    def total_seconds(self) -> float:
        return float(sum(self.iteration_seconds) + self.timings.get("setup", 0.0))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "iter": np.arange(1, self.iterations + 1),
            "residual_norm": self.residual_norms,
            "seconds": self.iteration_seconds,
        })

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "total_seconds": round(self.total_seconds, 6),
        }


# =====================================================
# Estado espacio-tiempo
# =====================================================

@dataclass
class SpaceTimeState:
    """Arreglos u, g, v por nivel; None marca puntos que no son del proceso (o g nulo)"""

    hierarchy: Hierarchy
    u: list[list[StateVector | None]]
    g: list[list[StateVector | None]]
    v: list[list[StateVector | None]]
    # Ψ(v_{j−1}) ya evaluado al armar el lado derecho FAS
    v_steps: list[dict[int, StateVector]]

    @classmethod
    def empty(cls, hierarchy: Hierarchy) -> SpaceTimeState:
        sizes = [lvl.n_points for lvl in hierarchy.levels]
        return cls(
            hierarchy=hierarchy,
            u=[[None] * n for n in sizes],
            g=[[None] * n for n in sizes],
            v=[[None] * n for n in sizes],
            v_steps=[{} for _ in sizes],
        )

    def values(self, level: int = 0) -> list[StateVector]:
        return list(self.u[level])

    def as_array(self, level: int = 0) -> np.ndarray:
        return np.vstack([u.data for u in self.u[level]])


# =====================================================
# Contexto de ejecución
# =====================================================

class ExecutionContext:
    """Contexto serial: un único proceso dueño de todos los puntos"""

    rank = 0
    size = 1

    def __init__(self, hierarchy: Hierarchy):
        self.hierarchy = hierarchy
        self.iteration = 0
        self.timings: dict[str, float] = defaultdict(float)
        self._c_cache: dict[int, np.ndarray] = {}
        self._f_cache: dict[int, list[range]] = {}

    # --- propiedad de puntos ---

    def points(self, level: int) -> range:
        return range(self.hierarchy.levels[level].n_points)

    def c_points(self, level: int) -> np.ndarray:
        if level not in self._c_cache:
            own = self.points(level)
            c, _ = self.hierarchy.cf_partition(level)
            self._c_cache[level] = c[(c >= own.start) & (c < own.stop)]
        return self._c_cache[level]

    def intervals(self, level: int) -> list[range]:
        if level not in self._f_cache:
            own = self.points(level)
            _, f = self.hierarchy.cf_partition(level)
            self._f_cache[level] = [iv for iv in f if own.start <= iv.start - 1 < own.stop]
        return self._f_cache[level]

    # --- comunicación (no-ops en serie) ---

    def halo(self, level: int, values: list) -> None:
        """Deja disponible values[start−1] del vecino izquierdo"""

    def share_windows(self, payload: Mapping[int, tuple]) -> dict[int, Mapping[int, tuple]]:
        """Datos de la ventana 𝒯^(p) para cada p propio de la malla más gruesa"""
        coarsest = self.hierarchy.n_levels - 1
        return {p: payload for p in self.points(coarsest)}

    def gather(self, values: np.ndarray) -> np.ndarray | None:
        return values

    def broadcast(self, value):
        return value

    def reduce_norm(self, squared: np.ndarray) -> float:
        full = self.gather(np.asarray(squared, dtype=np.float64))
        value = Norm.combine(full) if full is not None else None
        return self.broadcast(value)

    def reduce_max(self, value: float) -> float:
        full = self.gather(np.array([value], dtype=np.float64))
        result = float(np.max(full)) if full is not None else None
        return self.broadcast(result)

    def synchronize(self) -> None:
        pass

    @contextmanager
    def timer(self, phase: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            seconds = time.perf_counter() - start
            self.timings[phase] += seconds
            timing_log.debug("%d,%d,%s,%.6f", self.iteration, self.rank, phase, seconds)


def _context(state: SpaceTimeState, ctx: ExecutionContext | None) -> ExecutionContext:
    return ctx if ctx is not None else ExecutionContext(state.hierarchy)


# =====================================================
# Núcleos
# =====================================================

def _relax_point(app: Application, level: int, i: int, u_prev: StateVector, g: StateVector | None) -> StateVector:
    u = app.step(level, i, u_prev)
    if g is not None:
        u.add(g)
    return u


def f_relax(app: Application, state: SpaceTimeState, level: int,
            ctx: ExecutionContext | None = None) -> SpaceTimeState:
    """u_i = Φ_i(u_{i−1}) + g_i en cada punto F, barriendo cada intervalo desde su punto C"""
    ctx = _context(state, ctx)
    u, g = state.u[level], state.g[level]
    for interval in ctx.intervals(level):
        for i in interval:
            u[i] = _relax_point(app, level, i, u[i - 1], g[i])
    return state


def c_relax(app: Application, state: SpaceTimeState, level: int,
            ctx: ExecutionContext | None = None) -> SpaceTimeState:
    ctx = _context(state, ctx)
    u, g = state.u[level], state.g[level]
    ctx.halo(level, u)
    for c in ctx.c_points(level):
        if c > 0:
            u[c] = _relax_point(app, level, int(c), u[c - 1], g[c])
    return state


def cf_relax(app: Application, state: SpaceTimeState, level: int,
             ctx: ExecutionContext | None = None) -> SpaceTimeState:
    c_relax(app, state, level, ctx)
    return f_relax(app, state, level, ctx)


def residual_at(app: Application, level: int, i: int, u: Sequence, g: Sequence,
                step_prev: StateVector | None = None) -> StateVector:
    """r_i = g_i − u_i + Φ_i(u_{i−1}); r_0 = g_0 − u_0"""
    if i == 0:
        return difference(g[0], u[0])
    r = step_prev if step_prev is not None else app.step(level, i, u[i - 1])
    r.axpy(-1.0, u[i])
    if g[i] is not None:
        r.add(g[i])
    return r


def residual(app: Application, state: SpaceTimeState, level: int,
             points: Sequence[int] | None = None,
             ctx: ExecutionContext | None = None) -> list[StateVector | None]:
    """Residuo r = g − A u en los puntos pedidos (por defecto, todos los propios)"""
    ctx = _context(state, ctx)
    u, g = state.u[level], state.g[level]
    ctx.halo(level, u)
    out: list[StateVector | None] = [None] * len(u)
    for i in (ctx.points(level) if points is None else points):
        out[int(i)] = residual_at(app, level, int(i), u, g)
    return out


def restrict_injection(hierarchy: Hierarchy, level: int, values: Sequence) -> list:
    """Inyección: toma los puntos C del nivel (orden preservado)"""
    if not 0 <= level < hierarchy.n_levels - 1:
        raise ConfigurationError(f"el nivel {level} no tiene nivel grueso")
    return list(values[:: hierarchy.m[level]])


def solve_local_grid(app: Application, level: int, window: LocalCoarseGrid,
                     seed: Mapping[int, StateVector] | None,
                     residual: Mapping[int, StateVector],
                     seed_steps: Mapping[int, StateVector] | None = None) -> StateVector:
    """Sustitución hacia adelante sobre 𝒯^(p) con Ψ; devuelve sólo el valor en p.

    Sin semilla resuelve la corrección lineal A_c e = r. Con semilla v resuelve
    el problema FAS A(u) = A(v) + r: el primer punto queda en v_q + r_q y luego
    u_j = Ψ(u_{j−1}) + v_j − Ψ(v_{j−1}) + r_j.
    """
    q = window.start
    u = residual[q].clone()
    if seed is not None:
        u.add(seed[q])
    for j in range(q + 1, window.p + 1):
        u = _substitute(app, level, j, u, seed, residual, seed_steps)
    return u


def _substitute(app: Application, level: int, j: int, u: StateVector,
                seed: Mapping[int, StateVector] | None,
                residual: Mapping[int, StateVector],
                seed_steps: Mapping[int, StateVector] | None) -> StateVector:
    u = app.step(level, j, u)
    u.add(residual[j])
    if seed is not None:
        u.add(seed[j])
        step = seed_steps[j] if seed_steps is not None else app.step(level, j, seed[j - 1])
        u.axpy(-1.0, step)
    return u


def solve_local_grids(app: Application, level: int, hierarchy: Hierarchy, points: Sequence[int],
                      windows: Mapping[int, Mapping[int, tuple]]) -> dict[int, StateVector]:
    """Resuelve 𝒯^(p) para cada p propio a partir de las ventanas compartidas.

    ``windows[p][j]`` es ``(r_j,)`` para la corrección lineal o ``(v_j, r_j, Ψ(v_{j−1}))``
    para FAS. Si 𝒯^(p) y 𝒯^(p−1) empiezan en el mismo punto (k ≥ p+1, en
    particular Parareal) el valor en p extiende la sustitución de p−1 en un paso,
    con las mismas operaciones en el mismo orden que la resolución completa.
    """
    out: dict[int, StateVector] = {}
    previous: tuple[int, int, StateVector] | None = None
    for p in points:
        window = hierarchy.local_grid(p)
        data = windows[p]
        fas = len(data[window.start]) > 1
        residual_w = {j: data[j][1 if fas else 0] for j in window.indices}
        seed = {j: data[j][0] for j in window.indices} if fas else None
        steps = {j: data[j][2] for j in window.indices if j > window.start} if fas else None
        if previous is not None and previous[0] == p - 1 and previous[1] == window.start:
            u = _substitute(app, level, p, previous[2], seed, residual_w, steps)
        else:
            u = solve_local_grid(app, level, window, seed, residual_w, steps)
        out[p] = u
        previous = (p, window.start, u)
    return out


# =====================================================
# Iteraciones
# =====================================================

def two_level_iterate(app: Application, state: SpaceTimeState, config: SolverConfig,
                      ctx: ExecutionContext | None = None) -> SpaceTimeState:
    """Una iteración de dos niveles con corrección lineal y mallas locales truncadas"""
    ctx = _context(state, ctx)
    h = state.hierarchy
    m = h.m[0]

    with ctx.timer("relax"):
        f_relax(app, state, 0, ctx)
        for _ in range(config.cf_sweeps):
            cf_relax(app, state, 0, ctx)

    with ctx.timer("residual"):
        c_points = ctx.c_points(0)
        r = residual(app, state, 0, points=c_points, ctx=ctx)
        payload = {int(c) // m: (r[c],) for c in c_points}

    with ctx.timer("coarse"):
        corrections = solve_local_grids(app, 1, h, ctx.points(1), ctx.share_windows(payload))

    with ctx.timer("correct"):
        u = state.u[0]
        for p, e in corrections.items():
            u[p * m].add(e)
        f_relax(app, state, 0, ctx)
    return state


def _restrict_fas(app: Application, state: SpaceTimeState, level: int, ctx: ExecutionContext) -> None:
    """v = u^{(ℓ+1)} = R u; g^{(ℓ+1)} = A^{(ℓ+1)}(v) + R(g − A u)"""
    h = state.hierarchy
    m, coarse = h.m[level], level + 1
    c_points = ctx.c_points(level)
    r = residual(app, state, level, points=c_points, ctx=ctx)

    u_c, v_c, g_c = state.u[coarse], state.v[coarse], state.g[coarse]
    steps = state.v_steps[coarse]
    steps.clear()
    for j in ctx.points(coarse):
        v_c[j] = state.u[level][j * m].clone()
        u_c[j] = state.u[level][j * m].clone()
    ctx.halo(coarse, v_c)
    for j in ctx.points(coarse):
        rhs = v_c[j].clone()
        if j > 0:
            steps[j] = app.step(coarse, j, v_c[j - 1])
            rhs.axpy(-1.0, steps[j])
        g_c[j] = rhs.add(r[j * m])


def _interpolate_fas(app: Application, state: SpaceTimeState, level: int, ctx: ExecutionContext) -> None:
    """u_C += u^{(ℓ+1)} − v^{(ℓ+1)} y relajación F (interpolación ideal)"""
    m, coarse = state.hierarchy.m[level], level + 1
    for j in ctx.points(coarse):
        state.u[level][j * m].add(difference(state.u[coarse][j], state.v[coarse][j]))
    f_relax(app, state, level, ctx)


def coarsest_solve(app: Application, state: SpaceTimeState, ctx: ExecutionContext | None = None) -> SpaceTimeState:
    """Resoluciones FAS independientes en cada malla local de la malla más gruesa"""
    ctx = _context(state, ctx)
    h = state.hierarchy
    level = h.n_levels - 1
    u, g, v = state.u[level], state.g[level], state.v[level]
    steps = state.v_steps[level]

    for j in ctx.points(level):
        if v[j] is None:
            v[j] = u[j].clone()
    ctx.halo(level, v)
    payload = {}
    for j in ctx.points(level):
        if j > 0 and j not in steps:
            steps[j] = app.step(level, j, v[j - 1])
        step = steps.get(j)
        r = residual_at(app, level, j, v, g, step.clone() if step is not None else None)
        payload[j] = (v[j], r, step)

    for p, value in solve_local_grids(app, level, h, ctx.points(level), ctx.share_windows(payload)).items():
        u[p] = value
    return state


def _vcycle(app: Application, state: SpaceTimeState, config: SolverConfig, level: int,
            ctx: ExecutionContext) -> None:
    h = state.hierarchy
    if level == h.n_levels - 1:
        with ctx.timer("coarse"):
            coarsest_solve(app, state, ctx)
        return

    with ctx.timer("relax"):
        f_relax(app, state, level, ctx)
        for _ in range(config.cf_sweeps):
            cf_relax(app, state, level, ctx)
    with ctx.timer("residual"):
        _restrict_fas(app, state, level, ctx)
    _vcycle(app, state, config, level + 1, ctx)
    with ctx.timer("correct"):
        _interpolate_fas(app, state, level, ctx)


def multilevel_iterate(app: Application, state: SpaceTimeState, config: SolverConfig,
                       ctx: ExecutionContext | None = None) -> SpaceTimeState:
    """Un ciclo V FAS desde el nivel más fino"""
    _vcycle(app, state, config, 0, _context(state, ctx))
    return state


def nested_iteration_init(app: Application, state: SpaceTimeState, config: SolverConfig,
                          ctx: ExecutionContext | None = None) -> SpaceTimeState:
    """Resuelve primero la malla más gruesa y sube interpolando, con un ciclo V por nivel intermedio.

    Espera que ``state`` ya tenga g^{(ℓ)} = forzamiento propio de cada nivel y
    u^{(ℓ)} = inyección de la aproximación inicial.
    """
    ctx = _context(state, ctx)
    h = state.hierarchy
    coarsest = h.n_levels - 1
    for j in ctx.points(coarsest):
        state.v[coarsest][j] = state.u[coarsest][j].clone()
    state.v_steps[coarsest].clear()
    coarsest_solve(app, state, ctx)

    for level in range(coarsest - 1, -1, -1):
        m = h.m[level]
        for j in ctx.points(level + 1):
            state.u[level][j * m] = state.u[level + 1][j].clone()
        f_relax(app, state, level, ctx)
        if level > 0:
            _vcycle(app, state, config, level, ctx)
    return state


# =====================================================
# Driver
# =====================================================

def check_compatibility(app: Application, hierarchy: Hierarchy, config: SolverConfig) -> None:
    """Rechaza combinaciones modo/aplicación inconsistentes"""
    explicit = app.has_forcing and not app.forcing_folded
    if config.mode == "two-level":
        if hierarchy.n_levels != 2:
            raise ConfigurationError("el modo two-level requiere exactamente dos niveles")
        if not app.linear:
            raise ConfigurationError(
                f"{type(app).__name__} es no lineal: use multilevel-v o nested-v (FAS)"
            )
        if app.has_forcing and app.forcing_folded:
            raise ConfigurationError("la corrección lineal requiere forzamiento explícito (fold_forcing = false)")
    elif explicit:
        raise ConfigurationError("el modo FAS requiere el forzamiento plegado en el integrador (fold_forcing = true)")


def _level_forcing(app: Application, level: int, i: int) -> StateVector | None:
    if i > 0 and (app.forcing_folded or not app.has_forcing):
        return None
    return app.forcing(level, i)


def initialize_state(app: Application, hierarchy: Hierarchy, config: SolverConfig,
                     ctx: ExecutionContext) -> SpaceTimeState:
    state = SpaceTimeState.empty(hierarchy)
    guess = config.initial_guess
    if guess.kind == "provided" and (guess.values is None or len(guess.values) != hierarchy.fine.n_points):
        raise ConfigurationError("la aproximación inicial provista no cubre todos los puntos finos")

    for i in ctx.points(0):
        state.u[0][i] = app.initial_condition() if i == 0 else guess.vector(app, i)
        state.g[0][i] = _level_forcing(app, 0, i)

    for level in range(1, hierarchy.n_levels):
        m = hierarchy.m[level - 1]
        for j in ctx.points(level):
            state.u[level][j] = state.u[level - 1][j * m].clone()
            if config.mode == "nested-v":
                state.g[level][j] = _level_forcing(app, level, j)
    return state


def _measure(app: Application, state: SpaceTimeState, config: SolverConfig,
             ctx: ExecutionContext, previous: dict[int, float]) -> float:
    if config.norm.kind == "residual":
        r = residual(app, state, 0, ctx=ctx)
        squared = np.array([r[i].squared_norm() for i in ctx.points(0)], dtype=np.float64)
        return ctx.reduce_norm(squared)

    functional = config.norm.functional or app.functional
    c_points = ctx.c_points(0)
    new = np.array([functional(state.u[0][c]) for c in c_points], dtype=np.float64)
    old = np.array([previous.get(int(c), 0.0) for c in c_points], dtype=np.float64)
    previous.update({int(c): val for c, val in zip(c_points, new)})
    return ctx.reduce_max(Norm.relative_change(new, old))


def drive(app: Application, hierarchy: Hierarchy, config: SolverConfig,
          ctx: ExecutionContext) -> tuple[SpaceTimeState, ConvergenceReport]:
    """Bucle de iteración compartido por el driver serial y los workers del runtime"""
    report = ConvergenceReport()
    previous: dict[int, float] = {}

    with ctx.timer("setup"):
        state = initialize_state(app, hierarchy, config, ctx)
        if config.mode == "nested-v":
            nested_iteration_init(app, state, config, ctx)
        if config.norm.kind == "residual":
            report.initial_norm = _measure(app, state, config, ctx, previous)
        else:
            _measure(app, state, config, ctx, previous)

    iterate = two_level_iterate if config.mode == "two-level" else multilevel_iterate
    for it in range(1, config.max_iters + 1):
        ctx.iteration = it
        start = time.perf_counter()
        iterate(app, state, config, ctx)
        with ctx.timer("norm"):
            value = _measure(app, state, config, ctx, previous)
        ctx.synchronize()
        report.iteration_seconds.append(time.perf_counter() - start)

        if not math.isfinite(value):
            raise DivergenceError(it, value)
        report.residual_norms.append(value)
        report.iterations = it
        if ctx.rank == 0:
            log.info("iteración %d: ‖r‖ = %.3e", it, value)
        if value <= config.tol:
            report.converged = True
            report.stop_reason = "tol"
            break
    else:
        report.stop_reason = "max_iters"

    report.timings = dict(ctx.timings)
    return state, report


def solve(app: Application, config: SolverConfig) -> tuple[SpaceTimeState, ConvergenceReport]:
    """Driver secuencial: itera hasta ‖r‖ ≤ tol o max_iters (al menos una iteración)"""
    hierarchy = config.hierarchy(app.grid)
    check_compatibility(app, hierarchy, config)
    app.bind(hierarchy, config.coarse_substeps)
    return drive(app, hierarchy, config, ExecutionContext(hierarchy))
