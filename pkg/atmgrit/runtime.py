"""Ejecución distribuida simulada: ranks como hilos que sólo se comunican por colas de mensajes.

Cada rank corre el mismo bucle que el driver serial (``solver.drive``) con un
``RankContext`` que le asigna un bloque contiguo de puntos y resuelve los
intercambios: halo con el vecino izquierdo, distribución de residuos en dos
rondas de grupos y reducción determinista de la norma.
"""

from __future__ import annotations

import logging
import os
import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from atmgrit.core import Application, ATMGRITError, ConfigurationError, RuntimeFault, StateVector
from atmgrit.grids import Hierarchy
from atmgrit.solver import (
    ConvergenceReport,
    ExecutionContext,
    SolverConfig,
    SpaceTimeState,
    check_compatibility,
    drive,
)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 60.0
_POLL = 0.05

DropRule = Callable[[int, int, tuple], bool]


def default_workers() -> int:
    """Número de workers desde ATMGRIT_WORKERS (1 si no está definido)"""
    value = os.environ.get("ATMGRIT_WORKERS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigurationError(f"ATMGRIT_WORKERS={value!r} no es un entero") from None


# =====================================================
# Layout
# =====================================================

@dataclass(frozen=True)
class RankLayout:
    P: int
    hierarchy: Hierarchy
    #: rango de índices de la malla más gruesa por rank
    coarse_ranges: tuple[range, ...]

    def coarsest_owner(self, p: int) -> int:
        for rank, owned in enumerate(self.coarse_ranges):
            if p in owned:
                return rank
        raise IndexError(f"p={p} fuera de la malla más gruesa")

    def points(self, rank: int, level: int) -> range:
        """Bloque contiguo de puntos del nivel que pertenecen al rank"""
        h = self.hierarchy
        ratio = h.stride(h.n_levels - 1) // h.stride(level)
        owned = self.coarse_ranges[rank]
        start = owned.start * ratio
        stop = h.levels[level].n_points if rank == self.P - 1 else owned.stop * ratio
        return range(start, stop)

    @property
    def blocks(self) -> tuple[range, ...]:
        return tuple(self.points(rank, 0) for rank in range(self.P))

    def relax_work(self, level: int = 0) -> list[int]:
        """Aplicaciones de Φ por rank en una relajación F del nivel"""
        _, intervals = self.hierarchy.cf_partition(level)
        work = [0] * self.P
        for rank in range(self.P):
            own = self.points(rank, level)
            work[rank] = sum(len(iv) for iv in intervals if iv.start - 1 in own)
        return work


def build_layout(hierarchy: Hierarchy, P: int) -> RankLayout:
    """Bloques contiguos casi iguales alineados con los puntos de la malla más gruesa"""
    n_coarse = hierarchy.n_coarse
    if P < 1:
        raise ConfigurationError(f"P={P} debe ser ≥ 1")
    if P > n_coarse:
        raise ConfigurationError(f"P={P} excede los {n_coarse} puntos de la malla más gruesa")
    chunks = np.array_split(np.arange(n_coarse), P)
    ranges = tuple(range(int(c[0]), int(c[-1]) + 1) for c in chunks)
    return RankLayout(P=P, hierarchy=hierarchy, coarse_ranges=ranges)


# =====================================================
# Grupos de comunicación
# =====================================================

@dataclass(frozen=True)
class CommGroups:
    first_decomposition: tuple[range, ...]
    second_decomposition: tuple[range, ...]

    @property
    def rounds(self) -> tuple[tuple[range, ...], tuple[range, ...]]:
        return (self.first_decomposition, self.second_decomposition)


def build_groups(n_coarse: int, k: int) -> CommGroups:
    """{p_0..p_{k−1}}, {p_k..}, … y {p_{k−1}..p_{2k−2}}, {p_{2k−1}..}, …"""
    first = tuple(range(a, min(a + k, n_coarse)) for a in range(0, n_coarse, k))
    second = tuple(range(a, min(a + k, n_coarse)) for a in range(k - 1, n_coarse, k))
    return CommGroups(first, second)


# =====================================================
# Transporte
# =====================================================

def _detach(payload):
    """Copia profunda de vectores para que ningún rank comparta memoria mutable"""
    if isinstance(payload, StateVector):
        return payload.clone()
    if isinstance(payload, np.ndarray):
        return payload.copy()
    if isinstance(payload, tuple):
        return tuple(_detach(x) for x in payload)
    if isinstance(payload, dict):
        return {key: _detach(x) for key, x in payload.items()}
    return payload


class Communicator:
    """Colas punto a punto ordenadas entre ranks en proceso"""

    def __init__(self, rank: int, size: int, mailboxes: list[queue.Queue], abort: threading.Event,
                 timeout: float = DEFAULT_TIMEOUT, drop: DropRule | None = None):
        self.rank = rank
        self.size = size
        self._mailboxes = mailboxes
        self._abort = abort
        self._timeout = timeout
        self._drop = drop
        self._pending: dict[tuple[int, tuple], object] = {}

    def send(self, dest: int, tag: tuple, payload) -> None:
        if self._drop is not None and self._drop(self.rank, dest, tag):
            log.debug("mensaje descartado %s: %d → %d", tag, self.rank, dest)
            return
        self._mailboxes[dest].put((self.rank, tag, _detach(payload)))

    def recv(self, source: int, tag: tuple):
        key = (source, tag)
        if key in self._pending:
            return self._pending.pop(key)
        waited = 0.0
        inbox = self._mailboxes[self.rank]
        while True:
            if self._abort.is_set():
                raise RuntimeFault("abortado por fallo en otro rank", ranks=(self.rank,))
            try:
                src, got_tag, payload = inbox.get(timeout=_POLL)
            except queue.Empty:
                waited += _POLL
                if waited >= self._timeout:
                    raise RuntimeFault(
                        f"timeout esperando {tag} de rank {source}", ranks=(self.rank, source)
                    ) from None
                continue
            if (src, got_tag) == key:
                return payload
            self._pending[(src, got_tag)] = payload


# =====================================================
# Contexto por rank
# =====================================================

class RankContext(ExecutionContext):
    def __init__(self, layout: RankLayout, comm: Communicator, barrier: threading.Barrier,
                 timeout: float = DEFAULT_TIMEOUT):
        super().__init__(layout.hierarchy)
        self.layout = layout
        self.comm = comm
        self.rank = comm.rank
        self.size = layout.P
        self.groups = build_groups(layout.hierarchy.n_coarse, layout.hierarchy.k)
        self._barrier = barrier
        self._timeout = timeout
        self._seq = 0
        self._points = {level: layout.points(self.rank, level)
                        for level in range(layout.hierarchy.n_levels)}

    def _tag(self, kind: str) -> tuple:
        self._seq += 1
        return (kind, self._seq)

    def points(self, level: int) -> range:
        return self._points[level]

    def halo(self, level: int, values: list) -> None:
        tag = self._tag("halo")
        own = self._points[level]
        if self.rank < self.size - 1:
            self.comm.send(self.rank + 1, tag, values[own.stop - 1])
        if self.rank > 0:
            values[own.start - 1] = self.comm.recv(self.rank - 1, tag)

    def share_windows(self, payload: Mapping[int, tuple]) -> dict[int, Mapping[int, tuple]]:
        return exchange_residuals(self.groups, self.layout, self.comm, payload, self._tag("windows"))

    def gather(self, values: np.ndarray) -> np.ndarray | None:
        """Reunión en árbol binomial hacia el rank 0, concatenando en orden de rank"""
        tag = self._tag("gather")
        parts = [values]
        step = 1
        while step < self.size:
            if self.rank % (2 * step) == 0:
                partner = self.rank + step
                if partner < self.size:
                    parts.append(self.comm.recv(partner, tag))
            else:
                self.comm.send(self.rank - step, tag, np.concatenate(parts))
                return None
            step *= 2
        return np.concatenate(parts)

    def broadcast(self, value):
        """Difusión en árbol binomial desde el rank 0"""
        tag = self._tag("bcast")
        if self.rank != 0:
            lowbit = self.rank & -self.rank
            value = self.comm.recv(self.rank - lowbit, tag)
            step = lowbit // 2
        else:
            step = 1
            while step < self.size:
                step *= 2
            step //= 2
        while step >= 1:
            if self.rank + step < self.size:
                self.comm.send(self.rank + step, tag, value)
            step //= 2
        return value

    def synchronize(self) -> None:
        try:
            self._barrier.wait(timeout=self._timeout)
        except threading.BrokenBarrierError:
            raise RuntimeFault("barrera rota al cerrar la iteración", ranks=(self.rank,)) from None


def exchange_residuals(groups: CommGroups, layout: RankLayout, comm: Communicator,
                       local: Mapping[int, tuple], tag: tuple = ("windows", 0)) -> dict[int, dict[int, tuple]]:
    """Distribuye los datos de los puntos C gruesos en dos rondas de all-gather por grupos.

    Tras la ronda 1 cada p conoce su grupo de la primera descomposición; en la
    ronda 2 el último punto de cada grupo anterior reenvía lo suyo. Después de
    cada ronda se filtra a la ventana 𝒯^(p), así que al final cada p guarda
    exactamente los datos de su malla local.
    """
    h = layout.hierarchy
    rank = comm.rank
    held = {p: {p: local[p]} for p in local}

    for round_no, decomposition in enumerate(groups.rounds):
        for group in decomposition:
            mine = [p for p in group if p in held]
            if not mine:
                continue
            snapshot = {p: dict(held[p]) for p in mine}
            for p in mine:
                for q in group:
                    owner = layout.coarsest_owner(q)
                    if q != p and owner != rank:
                        comm.send(owner, (*tag, round_no, p, q), snapshot[p])
            for p in mine:
                for q in group:
                    if q == p:
                        continue
                    owner = layout.coarsest_owner(q)
                    data = snapshot[q] if owner == rank else comm.recv(owner, (*tag, round_no, q, p))
                    held[p].update(data)
        for p in held:
            window = h.local_grid(p)
            held[p] = {j: d for j, d in held[p].items() if j in window}
    return held


# =====================================================
# Driver paralelo
# =====================================================

def run_parallel(app: Application, config: SolverConfig, P: int, *,
                 timeout: float = DEFAULT_TIMEOUT,
                 drop: DropRule | None = None) -> tuple[SpaceTimeState, ConvergenceReport]:
    """Corre ``P`` ranks simulados; la historia de residuos coincide bit a bit con ``solve``"""
    hierarchy = config.hierarchy(app.grid)
    check_compatibility(app, hierarchy, config)
    layout = build_layout(hierarchy, P)
    app.bind(hierarchy, config.coarse_substeps)

    mailboxes = [queue.Queue() for _ in range(P)]
    abort = threading.Event()
    barrier = threading.Barrier(P)

    def worker(rank: int):
        comm = Communicator(rank, P, mailboxes, abort, timeout=timeout, drop=drop)
        ctx = RankContext(layout, comm, barrier, timeout=timeout)
        try:
            return drive(app, hierarchy, config, ctx)
        except BaseException:
            abort.set()
            barrier.abort()
            raise

    log.debug("runtime: %d ranks, bloques %s", P, [len(b) for b in layout.blocks])
    with ThreadPoolExecutor(max_workers=P, thread_name_prefix="rank") as pool:
        futures = [pool.submit(worker, rank) for rank in range(P)]
        outcomes = []
        for rank, future in enumerate(futures):
            try:
                outcomes.append((rank, future.result(), None))
            except BaseException as exc:  # noqa: BLE001
                outcomes.append((rank, None, exc))

    failures = [(rank, exc) for rank, _, exc in outcomes if exc is not None]
    if failures:
        raise _root_cause(failures)

    return _assemble(layout, [res for _, res, _ in outcomes])


def _root_cause(failures: list[tuple[int, BaseException]]) -> BaseException:
    primary = [(r, e) for r, e in failures
               if not (isinstance(e, RuntimeFault) and len(e.ranks) == 1)]
    rank, exc = (primary or failures)[0]
    if isinstance(exc, ATMGRITError):
        return exc
    fault = RuntimeFault(f"fallo en worker: {exc!r}", ranks=(rank,))
    fault.__cause__ = exc
    return fault


def _assemble(layout: RankLayout, results: list[tuple[SpaceTimeState, ConvergenceReport]]
              ) -> tuple[SpaceTimeState, ConvergenceReport]:
    h = layout.hierarchy
    state = SpaceTimeState.empty(h)
    for rank, (local, _) in enumerate(results):
        for level in range(h.n_levels):
            for i in layout.points(rank, level):
                state.u[level][i] = local.u[level][i]
                state.g[level][i] = local.g[level][i]
                state.v[level][i] = local.v[level][i]
    report = results[0][1]
    phases = set().union(*(r.timings for _, r in results))
    report.timings = {phase: max(r.timings.get(phase, 0.0) for _, r in results) for phase in sorted(phases)}
    return state, report
