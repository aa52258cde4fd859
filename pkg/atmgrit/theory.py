"""Propagadores de error de dos niveles (E_e, E_a, E_cc), cota de convergencia y oráculo denso.

Instrumento de validación: matrices densas para Φ escalar o bloques pequeños.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from atmgrit.core import ConfigurationError, HypothesisViolationError

MAX_BLOCK = 8

Operator = Literal["E_e", "E_a", "E_cc"]


@dataclass(frozen=True)
class EigenPair:
    lam: complex
    mu: complex


@dataclass(frozen=True)
class PropagatorMatrix:
    matrix: np.ndarray
    operator: Operator
    m: int
    k: int
    n_steps: int
    block: int = 1

    @property
    def n_coarse(self) -> int:
        return self.n_steps // self.m + 1

    def c_submatrix(self) -> np.ndarray:
        """Submatriz principal de los puntos C"""
        n = self.block
        rows = np.concatenate([np.arange(j * self.m * n, (j * self.m + 1) * n) for j in range(self.n_coarse)])
        return self.matrix[np.ix_(rows, rows)]

    def is_strictly_block_lower(self) -> bool:
        n = self.block
        for i in range(self.matrix.shape[0] // n):
            if np.any(self.matrix[i * n:(i + 1) * n, i * n:]):
                return False
        return True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.matrix)


def _as_block(phi) -> np.ndarray:
    a = np.atleast_2d(np.asarray(phi, dtype=np.float64))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigurationError(f"Φ debe ser escalar o matriz cuadrada (forma {a.shape})")
    if a.shape[0] > MAX_BLOCK:
        raise ConfigurationError(f"bloques de tamaño {a.shape[0]} > {MAX_BLOCK} no soportados")
    return a


def _check(m: int, k: int, n_steps: int) -> None:
    if m < 2:
        raise ConfigurationError(f"m={m} debe ser > 1")
    if k < 1:
        raise ConfigurationError(f"k={k} debe ser ≥ 1")
    if n_steps // m < 1:
        raise ConfigurationError(f"N_t={n_steps} no alcanza para m={m}")


def _point(i: int, m: int, n_coarse: int) -> tuple[int, int]:
    """Índice fino i → (bloque C j, desplazamiento s)"""
    j = min(i // m, n_coarse - 1)
    return j, i - j * m


def _assemble(c_rows: dict[int, list[tuple[int, np.ndarray]]], phi: np.ndarray,
              m: int, n_steps: int) -> np.ndarray:
    """Cada fila fina jm+s es Φ^s por la fila C de j"""
    n = phi.shape[0]
    n_coarse = n_steps // m + 1
    powers = [np.linalg.matrix_power(phi, s) for s in range(m)]
    E = np.zeros(((n_steps + 1) * n, (n_steps + 1) * n))
    for i in range(n_steps + 1):
        j, s = _point(i, m, n_coarse)
        for col, block in c_rows.get(j, []):
            c = col * m
            E[i * n:(i + 1) * n, c * n:(c + 1) * n] = powers[s] @ block
    return E


def assemble_E_exact(phi, m: int, k: int, n_steps: int) -> PropagatorMatrix:
    """E_e: bloque 𝒢 = Φ^{km+s} en la k-ésima subdiagonal de bloques C"""
    _check(m, k, n_steps)
    phi = _as_block(phi)
    n_coarse = n_steps // m + 1
    G = np.linalg.matrix_power(phi, k * m)
    c_rows = {j: [(j - k, G)] for j in range(k, n_coarse)}
    return PropagatorMatrix(_assemble(c_rows, phi, m, n_steps), "E_e", m, k, n_steps, phi.shape[0])


def assemble_E_approx(phi, psi, m: int, k: int, n_steps: int) -> PropagatorMatrix:
    """E_a: bloques 𝒵_x = Ψ^x(Φ^m − Ψ) en las subdiagonales 1..k−1 y 𝒲 = Ψ^{k−1}Φ^m en la k-ésima"""
    _check(m, k, n_steps)
    phi, psi = _as_block(phi), _as_block(psi)
    if phi.shape != psi.shape:
        raise ConfigurationError("Φ y Ψ deben tener la misma forma")
    n_coarse = n_steps // m + 1
    phi_m = np.linalg.matrix_power(phi, m)
    Z = [np.linalg.matrix_power(psi, x) @ (phi_m - psi) for x in range(k - 1)]
    W = np.linalg.matrix_power(psi, k - 1) @ phi_m

    c_rows: dict[int, list[tuple[int, np.ndarray]]] = {}
    for j in range(1, n_coarse):
        row = [(j - x - 1, Z[x]) for x in range(k - 1) if j - x - 1 >= 0]
        if j >= k:
            row.append((j - k, W))
        c_rows[j] = row
    return PropagatorMatrix(_assemble(c_rows, phi, m, n_steps), "E_a", m, k, n_steps, phi.shape[0])


def brute_force_propagator(phi, psi, m: int, k: int, n_steps: int) -> np.ndarray:
    """(I − Σ_p P_S^(p) (Ã_c^(p))^{-1} R_I^(p) A) P R_I con matrices densas"""
    _check(m, k, n_steps)
    phi, psi = _as_block(phi), _as_block(psi)
    n = phi.shape[0]
    N = n_steps + 1
    n_coarse = n_steps // m + 1
    I_n = np.eye(n)

    A = np.eye(N * n)
    for i in range(1, N):
        A[i * n:(i + 1) * n, (i - 1) * n:i * n] = -phi

    R = np.zeros((n_coarse * n, N * n))
    for j in range(n_coarse):
        R[j * n:(j + 1) * n, j * m * n:(j * m + 1) * n] = I_n

    P = np.zeros((N * n, n_coarse * n))
    for i in range(N):
        j, s = _point(i, m, n_coarse)
        P[i * n:(i + 1) * n, j * n:(j + 1) * n] = np.linalg.matrix_power(phi, s)

    correction = np.zeros((N * n, N * n))
    for p in range(n_coarse):
        q = max(0, p - k + 1)
        size = p - q + 1
        R_p = R[q * n:(p + 1) * n, :]
        A_c = np.eye(size * n)
        for a in range(1, size):
            A_c[a * n:(a + 1) * n, (a - 1) * n:a * n] = -psi
        P_S = np.zeros((N * n, size * n))
        stop = N if p == n_coarse - 1 else (p + 1) * m
        for i in range(p * m, stop):
            P_S[i * n:(i + 1) * n, (size - 1) * n:] = np.linalg.matrix_power(phi, i - p * m)
        correction += P_S @ np.linalg.solve(A_c, R_p @ A)

    return (np.eye(N * n) - correction) @ P @ R


# =====================================================
# Submatriz C-C y cota
# =====================================================

def _ecc_column(lam, mu, m: int, k: int, size: int) -> np.ndarray:
    lam_m = lam ** m
    dtype = np.complex128 if np.iscomplexobj(np.asarray([lam, mu])) else np.float64
    col = np.zeros(size, dtype=dtype)
    for d in range(1, min(k, size)):
        col[d] = mu ** (d - 1) * (lam_m - mu)
    if k < size:
        col[k] = mu ** (k - 1) * lam_m
    return col


def assemble_Ecc(lam, mu, m: int, k: int, size: int) -> np.ndarray:
    """Toeplitz triangular inferior que gobierna la convergencia en los puntos C"""
    if k < 1 or size < 1:
        raise ConfigurationError(f"k={k} y size={size} deben ser ≥ 1")
    col = _ecc_column(lam, mu, m, k, size)
    return scipy.linalg.toeplitz(col, np.zeros(size, dtype=col.dtype))


def ecc_norm(lam, mu, m: int, k: int, size: int) -> float:
    """‖Ẽ_cc‖₂ vía valores singulares"""
    return float(np.linalg.norm(assemble_Ecc(lam, mu, m, k, size), 2))


def bound_terms(lam, mu, m: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(|λ^m−μ|(1−|μ|^{k−1})/(1−|μ|), |λ^m μ^{k−1}|), vectorizado"""
    lam = np.asarray(lam, dtype=np.complex128)
    mu = np.asarray(mu, dtype=np.complex128)
    abs_mu = np.abs(mu)
    if np.any(abs_mu >= 1):
        raise HypothesisViolationError(f"la cota requiere |μ| < 1 (máx |μ| = {abs_mu.max():.6g})")
    lam_m = lam ** m
    first = np.abs(lam_m - mu) * (1 - abs_mu ** (k - 1)) / (1 - abs_mu)
    second = np.abs(lam_m * mu ** (k - 1))
    return first, second


def bound_Ecc(pairs: Iterable[EigenPair | tuple[complex, complex]], m: int, k: int) -> float:
    pairs = [p if isinstance(p, EigenPair) else EigenPair(*p) for p in pairs]
    if not pairs:
        raise ConfigurationError("se necesita al menos un par propio")
    first, second = bound_terms([p.lam for p in pairs], [p.mu for p in pairs], m, k)
    return float(np.max(first + second))


def error_subdiagonal_depth(lam, mu, m: int, k: int, size: int, ell: int) -> bool:
    """True si toda entrada no nula de Ẽ_cc^ℓ lleva al menos un factor (λ^m − μ).

    Las entradas sin ese factor salen sólo de productos del término 𝒲, así que
    basta con elevar la parte de la k-ésima subdiagonal y ver que se anula.
    """
    if ell < 1:
        raise ConfigurationError(f"ℓ={ell} debe ser ≥ 1")
    col = np.zeros(size, dtype=np.complex128)
    if k < size:
        col[k] = mu ** (k - 1) * lam ** m
    W = scipy.linalg.toeplitz(col, np.zeros(size, dtype=col.dtype))
    return not np.any(np.linalg.matrix_power(W, ell))


# =====================================================
# Espectros y tablas
# =====================================================

def heat_eigenpairs(dof: int, dt: float, m: int, length: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """λ_j = 1/(1+Δt σ_j), μ_j = 1/(1+mΔt σ_j) con σ_j del laplaciano de Dirichlet"""
    h = length / (dof + 1)
    j = np.arange(1, dof + 1)
    sigma = 4.0 / h**2 * np.sin(j * np.pi / (2 * (dof + 1))) ** 2
    return 1.0 / (1.0 + dt * sigma), 1.0 / (1.0 + m * dt * sigma)


def bound_rows(lams: Sequence[complex], mus: Sequence[complex], m: int, k: int,
               size: int) -> tuple[pd.DataFrame, int]:
    """Filas lambda,mu,m,k,norm_Ecc,bound; devuelve también cuántos pares se saltaron (|μ| ≥ 1)"""
    lams = np.asarray(lams)
    mus = np.asarray(mus)
    stable = np.abs(mus) < 1
    skipped = int(np.count_nonzero(~stable))
    lams, mus = lams[stable], mus[stable]
    if lams.size == 0:
        return pd.DataFrame(columns=["lambda", "mu", "m", "k", "norm_Ecc", "bound",
                                     "first_term", "second_term"]), skipped
    first, second = bound_terms(lams, mus, m, k)
    norms = [ecc_norm(lam, mu, m, k, size) for lam, mu in zip(lams, mus)]
    frame = pd.DataFrame({
        "lambda": np.real_if_close(lams),
        "mu": np.real_if_close(mus),
        "m": m,
        "k": k,
        "norm_Ecc": norms,
        "bound": first + second,
        "first_term": first,
        "second_term": second,
    })
    return frame, skipped
