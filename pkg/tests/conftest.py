"""Fixtures compartidas: aplicación escalar lineal con Φ y Ψ fijos por nivel"""

import numpy as np
import pytest

from atmgrit.core import Application, ArrayVector
from atmgrit.grids import TimeGrid


class Escalar(Application):
    """u_i = φ_ℓ u_{i−1} en el nivel ℓ, sin forzamiento"""

    vector_size = 1
    linear = True
    forcing_folded = False
    has_forcing = False

    def __init__(self, factors, n_points, u0=1.0):
        super().__init__(TimeGrid(0.0, 1.0, n_points))
        self.factors = list(factors)
        self.u0 = u0

    def step(self, level, i, u_prev):
        return u_prev.clone().scale(self.factors[level])

    def integrate(self, u_prev, t_start, t_stop):
        return u_prev.clone().scale(self.factors[0])

    def source(self, t_start, t_stop):
        return None

    def initial_condition(self):
        return ArrayVector([self.u0])

    def exact(self):
        """Solución secuencial en la malla fina"""
        return self.u0 * self.factors[0] ** np.arange(self.grid.n_points)


@pytest.fixture
def escalar():
    return Escalar


def vectores(values):
    return [ArrayVector([v]) for v in values]


def valores(vectors):
    return [float(v.data[0]) for v in vectors]
