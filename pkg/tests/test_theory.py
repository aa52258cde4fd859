#!/usr/bin/env python
"""
Tests de los propagadores de error, la submatriz C-C y la cota de convergencia
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from atmgrit.core import ConfigurationError, HypothesisViolationError
from atmgrit.theory import (
    EigenPair,
    assemble_E_approx,
    assemble_E_exact,
    assemble_Ecc,
    bound_Ecc,
    bound_rows,
    bound_terms,
    brute_force_propagator,
    ecc_norm,
    error_subdiagonal_depth,
    heat_eigenpairs,
)

estables = st.floats(min_value=-0.99, max_value=0.99, allow_nan=False)


def _unit_disk(rng, n, radius=0.999):
    return radius * np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * np.pi * rng.uniform(0, 1, n))


# =====================================================
# E_e y E_a
# =====================================================

def test_E_exact_entries():
    """φ=0.5, m=2, k=2, N_t=8: sólo φ^4 y φ^5 en las posiciones del bloque 𝒢"""
    phi = 0.5
    E = assemble_E_exact(phi, 2, 2, 8)
    rows, cols = np.nonzero(E.matrix)
    entries = {(int(r), int(c)): E.matrix[r, c] for r, c in zip(rows, cols)}
    assert entries == {
        (4, 0): phi**4, (5, 0): phi**5,
        (6, 2): phi**4, (7, 2): phi**5,
        (8, 4): phi**4,
    }
    np.testing.assert_allclose(E.matrix, brute_force_propagator(phi, phi**2, 2, 2, 8), atol=1e-15)
    assert E.is_strictly_block_lower()


def test_E_exact_degenerate_cases():
    """k = N_T+1 o φ = 0 dan la matriz nula"""
    assert not np.any(assemble_E_exact(0.7, 2, 5, 8).matrix)
    assert not np.any(assemble_E_exact(0.0, 2, 2, 8).matrix)


def test_E_approx_with_exact_coarse_equals_E_exact():
    for m, k, n in [(2, 2, 8), (3, 2, 13), (4, 3, 24)]:
        phi = 0.8
        np.testing.assert_allclose(
            assemble_E_approx(phi, phi**m, m, k, n).matrix,
            assemble_E_exact(phi, m, k, n).matrix,
            rtol=0, atol=1e-15,
        )


def test_E_approx_matches_brute_force_example():
    """φ=0.6, ψ=0.3, m=2, k=2, N_t=8"""
    E = assemble_E_approx(0.6, 0.3, 2, 2, 8)
    np.testing.assert_allclose(E.matrix, brute_force_propagator(0.6, 0.3, 2, 2, 8), rtol=0, atol=1e-12)
    assert E.is_strictly_block_lower()


@pytest.mark.parametrize("m", [2, 3, 4])
@pytest.mark.parametrize("k", [2, 3, 4])
def test_E_approx_oracle_sweep(m, k):
    """50 pares (φ, ψ) aleatorios con todos los N_t ≤ 24: E_a = oráculo denso y E_e con ψ=φ^m"""
    rng = np.random.default_rng(100 * m + k)
    lengths = list(range(m, 25))
    for trial in range(50):
        phi, psi = rng.uniform(-1, 1, 2)
        n_steps = lengths[trial % len(lengths)]
        E_a = assemble_E_approx(phi, psi, m, k, n_steps).matrix
        oracle = brute_force_propagator(phi, psi, m, k, n_steps)
        np.testing.assert_allclose(E_a, oracle, rtol=0, atol=1e-12,
                                   err_msg=f"φ={phi}, ψ={psi}, N_t={n_steps}")
        np.testing.assert_allclose(assemble_E_approx(phi, phi**m, m, k, n_steps).matrix,
                                   assemble_E_exact(phi, m, k, n_steps).matrix, rtol=0, atol=1e-12)


def test_E_approx_block_matches_brute_force():
    """Φ matricial 2×2 (bloques pequeños)"""
    phi = np.array([[0.5, 0.1], [0.0, 0.4]])
    psi = np.array([[0.3, 0.05], [0.0, 0.2]])
    E = assemble_E_approx(phi, psi, 2, 3, 10)
    assert E.matrix.shape == (22, 22) and E.block == 2
    np.testing.assert_allclose(E.matrix, brute_force_propagator(phi, psi, 2, 3, 10), rtol=0, atol=1e-12)


def test_invalid_operator_inputs():
    with pytest.raises(ConfigurationError):
        assemble_E_exact(0.5, 1, 2, 8)
    with pytest.raises(ConfigurationError):
        assemble_E_approx(np.eye(9), np.eye(9), 2, 2, 8)
    with pytest.raises(ConfigurationError):
        assemble_E_approx(np.eye(2), np.eye(3), 2, 2, 8)


# =====================================================
# E_cc y cota
# =====================================================

def test_Ecc_is_c_submatrix_of_E_approx():
    phi, psi, m, k = 0.7, 0.45, 3, 3
    E = assemble_E_approx(phi, psi, m, k, 21)
    np.testing.assert_allclose(E.c_submatrix(), assemble_Ecc(phi, psi, m, k, E.n_coarse), rtol=0, atol=1e-15)


def test_Ecc_exact_coarse_has_single_subdiagonal():
    lam, m, k = 0.9, 2, 3
    mu = lam**m
    E = assemble_Ecc(lam, mu, m, k, 8)
    expected = np.diag(np.full(5, mu ** (k - 1) * lam**m), -k)
    np.testing.assert_array_equal(E, expected)


def test_Ecc_zero_mu():
    """μ=0: sólo λ^m en la primera subdiagonal"""
    E = assemble_Ecc(0.5, 0.0, 2, 3, 6)
    np.testing.assert_array_equal(E, np.diag(np.full(5, 0.25), -1))


def test_bound_examples():
    """λ^m=μ, |μ|=0.81, k=3 → 0.81³; μ=0, k=2 → |λ^m|"""
    assert bound_Ecc([EigenPair(0.9, 0.81)], 2, 3) == pytest.approx(0.531441, abs=1e-15)
    assert bound_Ecc([(0.7, 0.0)], 3, 2) == pytest.approx(0.7**3, abs=1e-15)


def test_bound_anchor_099_500():
    """λ=0.99, μ=λ^m, km=500: el segundo término es 0.99^500 ≈ 0.00657"""
    m, k = 50, 10
    lam = 0.99
    first, second = bound_terms(lam, lam**m, m, k)
    assert float(first) < 1e-12
    assert float(second) == pytest.approx(0.99**500, rel=1e-12)
    assert f"{float(second):.3g}" == "0.00657"


def test_bound_rejects_unstable_mu():
    with pytest.raises(HypothesisViolationError):
        bound_Ecc([(0.5, 1.0)], 2, 2)
    with pytest.raises(HypothesisViolationError):
        bound_terms(0.5, -1.2, 2, 2)


@pytest.mark.parametrize("m", [2, 8, 32])
@pytest.mark.parametrize("k", [2, 4, 8])
def test_bound_holds_for_random_pairs(m, k):
    """1000 pares estables complejos: ‖Ẽ_cc‖₂ ≤ cota, sin violaciones"""
    rng = np.random.default_rng(m * 10 + k)
    lams, mus = _unit_disk(rng, 1000), _unit_disk(rng, 1000)
    frame, skipped = bound_rows(lams, mus, m, k, 32)
    assert skipped == 0 and len(frame) == 1000
    violations = frame[frame["norm_Ecc"] > frame["bound"] * (1 + 1e-12)]
    assert violations.empty, f"{len(violations)} violaciones de la cota"


@settings(max_examples=200, deadline=None)
@given(estables, estables, st.integers(2, 6), st.integers(1, 6), st.integers(2, 20))
def test_bound_property(lam, mu, m, k, size):
    norm = ecc_norm(lam, mu, m, k, size)
    assert norm <= bound_Ecc([(lam, mu)], m, k) * (1 + 1e-12) + 1e-15


def test_bound_rows_skips_unstable():
    frame, skipped = bound_rows([0.5, 0.5, 0.5], [0.2, 1.0, -1.5], 2, 2, 8)
    assert skipped == 2 and len(frame) == 1
    assert list(frame.columns[:6]) == ["lambda", "mu", "m", "k", "norm_Ecc", "bound"]


def test_heat_spectrum_bound_below_one():
    """Espectro del calor (1025 dof, 16384 puntos), m=128, k=12: toda cota < 1"""
    dt = 3.0 / 16383
    lams, mus = heat_eigenpairs(1025, dt, 128)
    first, second = bound_terms(lams, mus, 128, 12)
    assert np.all(first + second < 1.0)
    assert np.all((lams > 0) & (lams < 1)) and np.all((mus > 0) & (mus < 1))


# =====================================================
# Ventana de nilpotencia
# =====================================================

@pytest.mark.parametrize("P", [8, 16])
@pytest.mark.parametrize("k", [2, 4])
def test_nilpotency_window(P, k):
    """λ^m = μ ⇒ Ẽ_cc^{⌈P/k⌉} = 0"""
    lam, m = 0.95, 4
    E = assemble_Ecc(lam, lam**m, m, k, P)
    ell = math.ceil(P / k)
    assert np.max(np.abs(np.linalg.matrix_power(E, ell))) < 1e-14
    assert np.any(np.linalg.matrix_power(E, ell - 1))


def test_error_subdiagonal_depth_examples():
    lam, m = 0.9, 2
    mu = lam**m
    assert error_subdiagonal_depth(lam, mu, m, 4, 8, 2)
    assert not error_subdiagonal_depth(lam, mu, m, 4, 8, 1)
    assert error_subdiagonal_depth(lam, mu, m, 9, 8, 1)
    with pytest.raises(ConfigurationError):
        error_subdiagonal_depth(lam, mu, m, 4, 8, 0)
