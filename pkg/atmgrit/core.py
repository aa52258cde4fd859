"""Contratos compartidos: vectores de estado, aplicación, norma y errores"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Literal

import numpy as np

if TYPE_CHECKING:
    from atmgrit.grids import Hierarchy, TimeGrid


# =====================================================
# Errores
# =====================================================

class ATMGRITError(Exception):
    """Raíz de todos los errores del paquete"""


class ConfigurationError(ATMGRITError, ValueError):
    """Configuración inválida (jerarquía, solver, esquema o layout)"""


class InvalidDimensionError(ConfigurationError):
    """Dimensión de vector inválida"""


class DivergenceError(ATMGRITError, ArithmeticError):
    """La norma del residuo dejó de ser finita"""

    def __init__(self, iteration: int, value: float):
        super().__init__(f"residuo no finito ({value}) en la iteración {iteration}")
        self.iteration = iteration
        self.value = value


class HypothesisViolationError(ATMGRITError, ValueError):
    """Un par propio viola |μ| < 1"""


class NewtonConvergenceError(ATMGRITError, RuntimeError):
    """Newton no convergió dentro del límite de iteraciones"""

    def __init__(self, time: float, iterations: int, residual: float, reason: str = "límite de iteraciones"):
        super().__init__(
            f"Newton sin convergencia en t={time:.6g}: {reason} "
            f"({iterations} iteraciones, ‖F‖={residual:.3e})"
        )
        self.time = time
        self.iterations = iterations
        self.residual = residual


class BoundsViolationError(ATMGRITError, ArithmeticError):
    """El estado salió de la caja acotada permitida"""


class RuntimeFault(ATMGRITError, RuntimeError):
    """Fallo de un worker o de un mensaje en el runtime simulado"""

    def __init__(self, message: str, ranks: tuple[int, ...] = ()):
        super().__init__(f"{message} (ranks={list(ranks)})")
        self.ranks = tuple(ranks)


# =====================================================
# Vectores de estado
# =====================================================

class StateVector(ABC):
    """u(t_i) ∈ ℝ^n para un único punto temporal"""

    @abstractmethod
    def clone(self) -> StateVector: ...

    @abstractmethod
    def add(self, other: StateVector) -> StateVector:
        """self += other (in-place); devuelve self"""

    @abstractmethod
    def scale(self, alpha: float) -> StateVector:
        """self *= alpha (in-place); devuelve self"""

    @abstractmethod
    def axpy(self, alpha: float, x: StateVector) -> StateVector:
        """self += alpha·x (in-place); devuelve self"""

    @abstractmethod
    def norm(self) -> float: ...

    @abstractmethod
    def squared_norm(self) -> float: ...

    @abstractmethod
    def fill(self, value: float) -> StateVector: ...

    @abstractmethod
    def fill_random(self, seed: int) -> StateVector: ...

    @property
    @abstractmethod
    def size(self) -> int: ...


class ArrayVector(StateVector):
    """StateVector respaldado por un arreglo numpy float64 contiguo"""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.array(data, dtype=np.float64, copy=True).reshape(-1)

    @classmethod
    def zeros(cls, n: int) -> ArrayVector:
        if n < 1:
            raise InvalidDimensionError(f"dimensión n={n} inválida, se requiere n ≥ 1")
        return cls(np.zeros(n))

    def clone(self) -> ArrayVector:
        return ArrayVector(self.data)

    def add(self, other: StateVector) -> ArrayVector:
        self.data += _payload(other)
        return self

    def sub(self, other: StateVector) -> ArrayVector:
        self.data -= _payload(other)
        return self

    def scale(self, alpha: float) -> ArrayVector:
        self.data *= alpha
        return self

    def axpy(self, alpha: float, x: StateVector) -> ArrayVector:
        self.data += alpha * _payload(x)
        return self

    def squared_norm(self) -> float:
        return float(np.dot(self.data, self.data))

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def fill(self, value: float) -> ArrayVector:
        self.data.fill(value)
        return self

    def fill_random(self, seed: int) -> ArrayVector:
        self.data[:] = _uniform(seed, self.data.size)
        return self

    @property
    def size(self) -> int:
        return int(self.data.size)

    def __repr__(self) -> str:
        return f"ArrayVector(n={self.size})"


def _payload(v: StateVector) -> np.ndarray:
    if not isinstance(v, ArrayVector):
        raise TypeError(f"se esperaba ArrayVector, llegó {type(v).__name__}")
    return v.data


def _uniform(seed: int, n: int, point: int | None = None) -> np.ndarray:
    # PCG64 (default_rng): entradas uniformes en [-1, 1)
    entropy = seed if point is None else (seed, point)
    return np.random.default_rng(entropy).uniform(-1.0, 1.0, size=n)


def random_state(seed: int, n: int, point: int | None = None) -> ArrayVector:
    """Vector pseudoaleatorio determinista con entradas en [-1, 1).

    Con ``point`` se usa un flujo independiente por punto temporal, de modo
    que cada worker genera sus puntos sin sortear el bloque completo.
    """
    if n < 1:
        raise InvalidDimensionError(f"dimensión n={n} inválida, se requiere n ≥ 1")
    return ArrayVector(_uniform(seed, n, point))


def axpy(alpha: float, x: StateVector, y: StateVector) -> StateVector:
    """Devuelve un vector nuevo alpha·x + y (sin modificar x ni y)"""
    return y.clone().axpy(alpha, x)


def difference(a: StateVector, b: StateVector) -> StateVector:
    """a − b como vector nuevo"""
    return a.clone().axpy(-1.0, b)


# =====================================================
# Aplicación
# =====================================================

class Application(ABC):
    """Contrato de un problema: álgebra de estado + integrador de un paso por nivel.

    Las subclases implementan ``integrate`` (un paso de t_start a t_stop),
    ``source`` (término explícito g) e ``initial_condition``. El solver sólo
    usa ``step`` y ``forcing``, que dependen del nivel de la jerarquía ligada
    con ``bind``: en el nivel ℓ el paso es Δt·∏m_j y en el nivel más grueso
    Ψ puede evaluarse con ``coarse_substeps`` subpasos.
    """

    #: dimensión espacial n
    vector_size: int
    #: Φ afín en u (permite corrección lineal de dos niveles)
    linear: bool = False
    #: el forzamiento va dentro de ``integrate`` (convención FAS)
    forcing_folded: bool = True
    #: existe un término de forzamiento no nulo
    has_forcing: bool = True

    def __init__(self, grid: TimeGrid):
        self.grid = grid
        self.hierarchy: Hierarchy | None = None
        self.coarse_substeps = 1
        self._level_times: list[np.ndarray] = []

    # --- contrato que implementa cada problema ---

    @abstractmethod
    def integrate(self, u_prev: StateVector, t_start: float, t_stop: float) -> StateVector:
        """Un paso del integrador de t_start a t_stop (no modifica u_prev)"""

    @abstractmethod
    def source(self, t_start: float, t_stop: float) -> StateVector | None:
        """Término explícito g del paso; None si está plegado o es nulo"""

    @abstractmethod
    def initial_condition(self) -> StateVector:
        """u(t0)"""

    def zeros(self) -> StateVector:
        return ArrayVector.zeros(self.vector_size)

    # --- vista por niveles ---

    def bind(self, hierarchy: Hierarchy, coarse_substeps: int = 1) -> Application:
        """Liga la aplicación a una jerarquía (pasos por nivel, subciclos)"""
        if coarse_substeps < 1:
            raise ConfigurationError(f"coarse_substeps={coarse_substeps} debe ser ≥ 1")
        self.hierarchy = hierarchy
        self.coarse_substeps = coarse_substeps
        self._level_times = [lvl.times for lvl in hierarchy.levels]
        return self

    def substeps(self, level: int) -> int:
        assert self.hierarchy is not None, "aplicación sin jerarquía ligada"
        return self.coarse_substeps if level == self.hierarchy.n_levels - 1 else 1

    def _sub_times(self, level: int, i: int) -> np.ndarray:
        times = self._level_times[level]
        return np.linspace(times[i - 1], times[i], self.substeps(level) + 1)

    def step(self, level: int, i: int, u_prev: StateVector) -> StateVector:
        """Φ_i en el nivel dado (Ψ en el más grueso); no incluye g explícito"""
        sub = self._sub_times(level, i)
        u = u_prev
        for s in range(len(sub) - 1):
            u = self.integrate(u, sub[s], sub[s + 1])
        return u

    def forcing(self, level: int, i: int) -> StateVector:
        """g_i del nivel; g_0 es la condición inicial.

        Con subciclos, las fuentes se componen con el integrador:
        w ← integrate(w) + source en cada subpaso, partiendo de w = 0.
        """
        if i == 0:
            return self.initial_condition()
        sub = self._sub_times(level, i)
        g = self.zeros()
        for s in range(len(sub) - 1):
            if s > 0:
                g = self.integrate(g, sub[s], sub[s + 1])
            src = self.source(sub[s], sub[s + 1])
            if src is not None:
                g.add(src)
        return g

    # funcional escalar para el criterio de parada alternativo
    def functional(self, u: StateVector) -> float:
        return float(np.mean(_payload(u)))


# =====================================================
# Norma
# =====================================================

NormKind = Literal["residual", "functional"]


@dataclass(frozen=True)
class Norm:
    """Criterio de parada: norma 2 del residuo espacio-tiempo o cambio relativo de un funcional"""

    kind: NormKind = "residual"
    functional: Callable[[StateVector], float] | None = None

    def __post_init__(self):
        if self.kind not in ("residual", "functional"):
            raise ConfigurationError(f"tipo de norma desconocido: {self.kind!r}")

    @staticmethod
    def combine(squared: np.ndarray) -> float:
        """Reducción determinista: suma en orden de índice y raíz"""
        return float(np.sqrt(np.sum(np.asarray(squared, dtype=np.float64))))

    @staticmethod
    def relative_change(new: np.ndarray, old: np.ndarray) -> float:
        new = np.asarray(new, dtype=np.float64)
        old = np.asarray(old, dtype=np.float64)
        if new.size == 0:
            return 0.0
        scale = np.maximum(np.abs(new), np.finfo(np.float64).tiny)
        return float(np.max(np.abs(new - old) / scale))
