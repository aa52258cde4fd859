"""Jerarquía de mallas temporales, particiones C/F y mallas gruesas locales truncadas"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from atmgrit.core import ConfigurationError


@dataclass(frozen=True)
class TimeGrid:
    """Malla uniforme t_i = t0 + i·dt con n_points = N_t + 1 puntos"""

    t0: float
    dt: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 2:
            raise ConfigurationError(f"la malla necesita ≥ 2 puntos (tiene {self.n_points})")
        if not self.dt > 0:
            raise ConfigurationError(f"dt={self.dt} debe ser positivo")

    @classmethod
    def from_interval(cls, t0: float, tf: float, n_points: int) -> TimeGrid:
        if n_points < 2:
            raise ConfigurationError(f"la malla necesita ≥ 2 puntos (tiene {n_points})")
        return cls(t0=float(t0), dt=(float(tf) - float(t0)) / (n_points - 1), n_points=int(n_points))

    @property
    def n_steps(self) -> int:
        return self.n_points - 1

    @property
    def tf(self) -> float:
        return self.t0 + self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_points) * self.dt

    def coarsen(self, m: int) -> TimeGrid:
        return TimeGrid(t0=self.t0, dt=self.dt * m, n_points=self.n_steps // m + 1)


@dataclass(frozen=True)
class LocalCoarseGrid:
    """Ventana [max(0, p−k+1), p] de la malla más gruesa que termina en p"""

    p: int
    start: int

    @property
    def indices(self) -> range:
        return range(self.start, self.p + 1)

    @property
    def size(self) -> int:
        return self.p - self.start + 1

    def __contains__(self, j: int) -> bool:
        return self.start <= j <= self.p


def local_grid(p: int, k: int) -> LocalCoarseGrid:
    return LocalCoarseGrid(p=p, start=max(0, p - k + 1))


@dataclass(frozen=True)
class Hierarchy:
    levels: tuple[TimeGrid, ...]
    m: tuple[int, ...]
    k: int
    _partitions: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def fine(self) -> TimeGrid:
        return self.levels[0]

    @property
    def coarsest(self) -> TimeGrid:
        return self.levels[-1]

    @property
    def n_coarse(self) -> int:
        """Número de puntos de la malla más gruesa (N_T + 1)"""
        return self.coarsest.n_points

    @property
    def parareal_k(self) -> int:
        return self.n_coarse

    @property
    def is_parareal(self) -> bool:
        return self.k >= self.n_coarse

    def stride(self, level: int) -> int:
        """Distancia en índices finos entre puntos consecutivos del nivel"""
        return int(np.prod(self.m[:level], dtype=np.int64))

    def fine_index(self, level: int, i: int) -> int:
        return i * self.stride(level)

    def cf_partition(self, level: int) -> tuple[np.ndarray, list[range]]:
        """Puntos C e intervalos F maximales (cada uno precedido por su punto C)"""
        if not 0 <= level < self.n_levels - 1:
            raise ConfigurationError(f"el nivel {level} no tiene partición C/F")
        cached = self._partitions.get(level)
        if cached is None:
            n, m = self.levels[level].n_points, self.m[level]
            c_indices = np.arange(0, n, m)
            intervals = [range(c + 1, min(c + m, n)) for c in c_indices if c + 1 < n]
            cached = (c_indices, intervals)
            self._partitions[level] = cached
        return cached

    def local_grid(self, p: int) -> LocalCoarseGrid:
        if not 0 <= p < self.n_coarse:
            raise IndexError(f"p={p} fuera de la malla más gruesa (0..{self.n_coarse - 1})")
        return local_grid(p, self.k)

    @cached_property
    def local_grids(self) -> tuple[LocalCoarseGrid, ...]:
        return tuple(local_grid(p, self.k) for p in range(self.n_coarse))

    def with_k(self, k: int) -> Hierarchy:
        return build_hierarchy(self.fine, self.m, k)


def _factors(m: int | Sequence[int]) -> tuple[int, ...]:
    factors = (m,) if np.isscalar(m) else tuple(m)
    if not factors:
        raise ConfigurationError("se necesita al menos un factor de engrosamiento")
    for f in factors:
        if int(f) != f or f <= 1:
            raise ConfigurationError(f"factor de engrosamiento m={f} inválido (se requiere entero > 1)")
    return tuple(int(f) for f in factors)


def build_hierarchy(grid: TimeGrid, m: int | Sequence[int], k: int) -> Hierarchy:
    """Construye la jerarquía recursivamente: el nivel ℓ+1 son los puntos C del nivel ℓ"""
    factors = _factors(m)
    if int(k) != k or k < 1:
        raise ConfigurationError(f"distancia k={k} inválida (se requiere k ≥ 1)")
    levels = [grid]
    for level, factor in enumerate(factors):
        n_coarse = levels[-1].n_steps // factor + 1
        if n_coarse < 2:
            raise ConfigurationError(
                f"el engrosamiento agota la malla: el nivel {level + 1} tendría {n_coarse} punto(s)"
            )
        levels.append(levels[-1].coarsen(factor))
    return Hierarchy(levels=tuple(levels), m=factors, k=int(k))
