#!/usr/bin/env python
"""
Tests de la jerarquía temporal, particiones C/F y mallas locales truncadas
"""

import pytest
from hypothesis import given, strategies as st

from atmgrit.core import ConfigurationError
from atmgrit.grids import TimeGrid, build_hierarchy, local_grid


def _grid(n_steps):
    return TimeGrid(0.0, 1.0, n_steps + 1)


def test_time_grid_points():
    grid = TimeGrid.from_interval(0.0, 3.0, 4)
    assert grid.dt == 1.0 and grid.n_steps == 3 and grid.tf == 3.0
    assert grid.times.tolist() == [0.0, 1.0, 2.0, 3.0]
    with pytest.raises(ConfigurationError):
        TimeGrid.from_interval(0.0, 1.0, 1)
    with pytest.raises(ConfigurationError):
        TimeGrid(0.0, -1.0, 5)


def test_two_level_local_grids():
    """N_t=15, m=2, k=4: malla gruesa T_0…T_7 y sus ventanas"""
    h = build_hierarchy(_grid(15), 2, 4)
    assert h.n_coarse == 8, f"se esperaban 8 puntos gruesos, hay {h.n_coarse}"
    assert list(h.local_grid(0).indices) == [0]
    assert list(h.local_grid(1).indices) == [0, 1]
    assert list(h.local_grid(5).indices) == [2, 3, 4, 5]
    assert list(h.local_grid(7).indices) == [4, 5, 6, 7]


def test_three_level_hierarchy():
    """N_t=20, m=(2,2), k=4: el nivel 2 tiene 6 puntos y 𝒯^(5) son los últimos 4"""
    h = build_hierarchy(_grid(20), (2, 2), 4)
    assert [lvl.n_points for lvl in h.levels] == [21, 11, 6]
    assert list(h.local_grid(5).indices) == [2, 3, 4, 5]
    assert h.stride(2) == 4 and h.fine_index(2, 5) == 20


def test_k_one_is_single_point():
    h = build_hierarchy(_grid(12), 3, 1)
    for p in range(h.n_coarse):
        assert list(h.local_grid(p).indices) == [p]


def test_parareal_limit():
    """Con k = N_T+1 la ventana del último punto es toda la malla gruesa"""
    h = build_hierarchy(_grid(16), 4, 5)
    assert h.is_parareal and h.parareal_k == 5
    assert list(h.local_grid(4).indices) == list(range(5))


@pytest.mark.parametrize("n_steps,m,c_points,intervals", [
    (15, 2, list(range(0, 15, 2)), [[i] for i in range(1, 16, 2)]),
    (4, 4, [0, 4], [[1, 2, 3]]),
    (6, 4, [0, 4], [[1, 2, 3], [5, 6]]),
])
def test_cf_partition(n_steps, m, c_points, intervals):
    h = build_hierarchy(_grid(n_steps), m, 2)
    c, f = h.cf_partition(0)
    assert c.tolist() == c_points
    assert [list(iv) for iv in f] == intervals


def test_cf_partition_level_bounds():
    h = build_hierarchy(_grid(8), 2, 2)
    with pytest.raises(ConfigurationError):
        h.cf_partition(1)


@pytest.mark.parametrize("m,k", [(1, 2), (2, 0), ((2, 1), 2), (2.5, 2), ((), 2)])
def test_invalid_hierarchy(m, k):
    with pytest.raises(ConfigurationError):
        build_hierarchy(_grid(16), m, k)


def test_coarsening_exhausts_grid():
    """Un nivel con menos de 2 puntos es error de configuración"""
    with pytest.raises(ConfigurationError, match="agota"):
        build_hierarchy(_grid(8), (4, 4), 2)


@given(st.integers(min_value=0, max_value=200), st.integers(min_value=1, max_value=40))
def test_local_grid_size_and_overlap(p, k):
    """|𝒯^(p)| = min(p+1, k) y vecinas se solapan en min(p, k−1) puntos"""
    grid = local_grid(p, k)
    assert grid.size == min(p + 1, k)
    assert grid.indices[-1] == p
    nxt = local_grid(p + 1, k)
    overlap = set(grid.indices) & set(nxt.indices)
    assert len(overlap) == min(p + 1, k - 1)


@given(st.integers(min_value=2, max_value=300), st.lists(st.integers(2, 6), min_size=1, max_size=3))
def test_levels_coincide_with_c_points(n_steps, factors):
    """El nivel ℓ+1 tiene ⌊N_t/m⌋+1 puntos en las posiciones C del nivel ℓ"""
    try:
        h = build_hierarchy(_grid(n_steps), factors, 3)
    except ConfigurationError:
        return
    for level, m in enumerate(h.m):
        fine, coarse = h.levels[level], h.levels[level + 1]
        assert coarse.n_points == fine.n_steps // m + 1
        c, _ = h.cf_partition(level)
        assert c[0] == 0
        assert coarse.times.tolist() == pytest.approx(fine.times[c].tolist())
    assert sorted(g.p for g in h.local_grids) == list(range(h.n_coarse))
