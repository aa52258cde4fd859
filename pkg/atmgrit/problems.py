"""Aplicaciones incluidas: Dahlquist escalar, calor 1D y Gray–Scott 2D"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from atmgrit.core import (
    Application,
    ArrayVector,
    BoundsViolationError,
    ConfigurationError,
    NewtonConvergenceError,
    StateVector,
)
from atmgrit.grids import TimeGrid

log = logging.getLogger(__name__)


def _dt_key(dt: float) -> float:
    # pasos que sólo difieren en el último ulp comparten factorización
    return float(f"{dt:.12e}")


# =====================================================
# Dahlquist
# =====================================================

@dataclass(frozen=True)
class DahlquistSpec:
    lam: float = -1.0
    u0: float = 1.0
    t0: float = 0.0
    t_final: float = 5.0
    n_points: int = 65


class Dahlquist(Application):
    """u' = λu con Euler implícito: u_i = u_{i−1}/(1 − λΔt)"""

    vector_size = 1
    linear = True
    forcing_folded = False
    has_forcing = False

    def __init__(self, spec: DahlquistSpec = DahlquistSpec()):
        if spec.lam >= 0:
            raise ConfigurationError(f"λ={spec.lam} debe ser negativo")
        super().__init__(TimeGrid.from_interval(spec.t0, spec.t_final, spec.n_points))
        self.spec = spec

    def multiplier(self, dt: float) -> float:
        return 1.0 / (1.0 - self.spec.lam * dt)

    def integrate(self, u_prev: StateVector, t_start: float, t_stop: float) -> StateVector:
        return u_prev.clone().scale(self.multiplier(t_stop - t_start))

    def source(self, t_start: float, t_stop: float) -> None:
        return None

    def initial_condition(self) -> ArrayVector:
        return ArrayVector([self.spec.u0])


# =====================================================
# Calor 1D
# =====================================================

@dataclass(frozen=True)
class Heat1DSpec:
    dof: int = 1025
    x_min: float = 0.0
    x_max: float = 1.0
    t0: float = 0.0
    t_final: float = 3.0
    n_points: int = 16384
    fold_forcing: bool = False


class Heat1D(Application):
    """u_t − u_xx = b(x,t) con Dirichlet homogéneo, diferencias centradas y Euler implícito.

    b(x,t) = −sin(πx)(sin t − π² cos t), u(x,0) = sin(πx); solución exacta
    sin(πx)cos(t). Cada paso resuelve (I + Δt L)u = u_prev (+ Δt b(t_i) si el
    forzamiento está plegado) con una factorización de Cholesky en banda que
    se calcula una vez por tamaño de paso.
    """

    linear = True
    has_forcing = True

    def __init__(self, spec: Heat1DSpec = Heat1DSpec()):
        if spec.dof < 1:
            raise ConfigurationError(f"dof={spec.dof} debe ser ≥ 1")
        if not spec.x_max > spec.x_min:
            raise ConfigurationError("se requiere x_max > x_min")
        super().__init__(TimeGrid.from_interval(spec.t0, spec.t_final, spec.n_points))
        self.spec = spec
        self.vector_size = spec.dof
        self.forcing_folded = spec.fold_forcing
        self.h = (spec.x_max - spec.x_min) / (spec.dof + 1)
        self.x = spec.x_min + self.h * np.arange(1, spec.dof + 1)
        self._factors: dict[float, np.ndarray] = {}

    def laplacian(self) -> sp.csr_matrix:
        """L = −∂xx discreto (simétrico definido positivo)"""
        n = self.spec.dof
        return sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="csr") / self.h**2

    def _factor(self, dt: float) -> np.ndarray:
        key = _dt_key(dt)
        factor = self._factors.get(key)
        if factor is None:
            n = self.spec.dof
            ab = np.zeros((2, n))
            ab[0, 1:] = -dt / self.h**2
            ab[1, :] = 1.0 + 2.0 * dt / self.h**2
            factor = scipy.linalg.cholesky_banded(ab)
            self._factors[key] = factor
        return factor

    def bind(self, hierarchy, coarse_substeps: int = 1):
        super().bind(hierarchy, coarse_substeps)
        for level, grid in enumerate(hierarchy.levels):
            self._factor(grid.dt / self.substeps(level))
        return self

    def b(self, t: float) -> np.ndarray:
        return -np.sin(np.pi * self.x) * (np.sin(t) - np.pi**2 * np.cos(t))

    def exact(self, t: float) -> np.ndarray:
        return np.sin(np.pi * self.x) * np.cos(t)

    def _solve(self, rhs: np.ndarray, dt: float) -> ArrayVector:
        return ArrayVector(scipy.linalg.cho_solve_banded((self._factor(dt), False), rhs))

    def integrate(self, u_prev: StateVector, t_start: float, t_stop: float) -> ArrayVector:
        dt = t_stop - t_start
        rhs = u_prev.data
        if self.forcing_folded:
            rhs = rhs + dt * self.b(t_stop)
        return self._solve(rhs, dt)

    def source(self, t_start: float, t_stop: float) -> ArrayVector | None:
        if self.forcing_folded:
            return None
        dt = t_stop - t_start
        return self._solve(dt * self.b(t_stop), dt)

    def initial_condition(self) -> ArrayVector:
        return ArrayVector(np.sin(np.pi * self.x))


# =====================================================
# Gray–Scott 2D
# =====================================================

@dataclass(frozen=True)
class GrayScottSpec:
    grid_size: int = 32
    length: float = 2.5
    feed: float = 0.024
    kill: float = 0.06
    du: float = 8e-5
    dv: float = 4e-5
    t0: float = 0.0
    t_final: float = 64.0
    n_points: int = 512
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    krylov_tol: float = 1e-10
    box: float = 10.0
    reaction: bool = True


class GrayScott(Application):
    """Reacción-difusión de Gray–Scott en [0, L]² periódico, Euler implícito + Newton-Krylov.

    Estado apilado w = (u, v) de tamaño 2N². Cada paso resuelve
    w − w_prev − Δt f(w) = 0 con Newton (jacobiano analítico) y GMRES
    precondicionado con ILU para los sistemas lineales.
    """

    linear = False
    forcing_folded = True
    has_forcing = False

    def __init__(self, spec: GrayScottSpec = GrayScottSpec()):
        if spec.grid_size < 3:
            raise ConfigurationError(f"grid_size={spec.grid_size} debe ser ≥ 3")
        super().__init__(TimeGrid.from_interval(spec.t0, spec.t_final, spec.n_points))
        self.spec = spec
        self.n_cells = spec.grid_size**2
        self.vector_size = 2 * self.n_cells
        self.h = spec.length / spec.grid_size
        self.coords = self.h * np.arange(spec.grid_size)
        self.L = self._periodic_laplacian()
        self._identity = sp.identity(self.vector_size, format="csc")

    def _periodic_laplacian(self) -> sp.csr_matrix:
        n = self.spec.grid_size
        one_d = sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1], format="lil")
        one_d[0, n - 1] = 1.0
        one_d[n - 1, 0] = 1.0
        eye = sp.identity(n, format="csr")
        return ((sp.kron(eye, one_d) + sp.kron(one_d, eye)) / self.h**2).tocsr()

    def split(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return w[: self.n_cells], w[self.n_cells:]

    def rhs(self, w: np.ndarray) -> np.ndarray:
        s = self.spec
        u, v = self.split(w)
        fu = s.du * (self.L @ u)
        fv = s.dv * (self.L @ v)
        if s.reaction:
            uvv = u * v * v
            fu += -uvv + s.feed * (1.0 - u)
            fv += uvv - (s.feed + s.kill) * v
        return np.concatenate([fu, fv])

    def jacobian(self, w: np.ndarray) -> sp.csr_matrix:
        s = self.spec
        u, v = self.split(w)
        Juu, Jvv = s.du * self.L, s.dv * self.L
        Juv = Jvu = None
        if s.reaction:
            Juu = Juu - sp.diags(v * v + s.feed)
            Juv = sp.diags(-2.0 * u * v)
            Jvu = sp.diags(v * v)
            Jvv = Jvv + sp.diags(2.0 * u * v - (s.feed + s.kill))
        return sp.bmat([[Juu, Juv], [Jvu, Jvv]], format="csr")

    def newton(self, w_prev: np.ndarray, dt: float, t: float) -> np.ndarray:
        s = self.spec
        w = w_prev.copy()
        res = -dt * self.rhs(w)
        norm0 = norm = float(np.linalg.norm(res))
        iterations = 0
        while not (norm <= s.newton_tol or norm <= s.newton_tol * norm0):
            if iterations >= s.newton_max_iter:
                raise NewtonConvergenceError(t, iterations, norm)
            J = (self._identity - dt * self.jacobian(w)).tocsc()
            ilu = spla.spilu(J)
            M = spla.LinearOperator(J.shape, ilu.solve)
            delta, info = spla.gmres(J, -res, rtol=s.krylov_tol, atol=0.0, M=M, restart=50, maxiter=200)
            if info != 0:
                raise NewtonConvergenceError(t, iterations, norm, reason=f"GMRES info={info}")
            w += delta
            res = w - w_prev - dt * self.rhs(w)
            norm = float(np.linalg.norm(res))
            iterations += 1
        return w

    def integrate(self, u_prev: StateVector, t_start: float, t_stop: float) -> ArrayVector:
        w = self.newton(u_prev.data, t_stop - t_start, t_stop)
        if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > self.spec.box:
            raise BoundsViolationError(
                f"Gray–Scott fuera de la caja ±{self.spec.box} en t={t_stop:.6g}"
            )
        return ArrayVector(w)

    def source(self, t_start: float, t_stop: float) -> None:
        return None

    def initial_condition(self) -> ArrayVector:
        X, Y = np.meshgrid(self.coords, self.coords, indexing="ij")
        bump = (X >= 1.0) & (X <= 1.5) & (Y >= 1.0) & (Y <= 1.5)
        s = np.where(bump, 0.25 * np.sin(4 * np.pi * X) ** 2 * np.sin(4 * np.pi * Y) ** 2, 0.0)
        return ArrayVector(np.concatenate([(1.0 - 2.0 * s).ravel(), s.ravel()]))

    def mass(self, w: StateVector) -> tuple[float, float]:
        u, v = self.split(w.data)
        return float(u.sum()), float(v.sum())

    def functional(self, w: StateVector) -> float:
        return float(np.mean(self.split(w.data)[1]))


# =====================================================
# Fábrica
# =====================================================

PROBLEMS = {
    "dahlquist": (Dahlquist, DahlquistSpec),
    "heat1d": (Heat1D, Heat1DSpec),
    "grayscott": (GrayScott, GrayScottSpec),
}


def make_application(name: str, params: dict | None = None) -> Application:
    try:
        cls, spec_cls = PROBLEMS[name]
    except KeyError:
        raise ConfigurationError(f"problema desconocido: {name!r} (opciones: {sorted(PROBLEMS)})") from None
    try:
        spec = spec_cls(**(params or {}))
    except TypeError as exc:
        raise ConfigurationError(f"parámetros inválidos para {name}: {exc}") from exc
    return cls(spec)
