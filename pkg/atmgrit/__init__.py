"""AT-MGRIT: multigrid-reduction-in-time con mallas gruesas locales truncadas.

Módulos:
    core      contratos (StateVector, Application, Norm) y errores
    grids     jerarquía temporal, particiones C/F, mallas locales 𝒯^(p)
    solver    relajaciones, ciclos de dos niveles y FAS, driver secuencial
    runtime   ranks simulados con paso de mensajes
    theory    propagadores E_e / E_a / E_cc y cota de convergencia
    problems  Dahlquist, calor 1D, Gray–Scott 2D
    cli       subcomandos solve, theory, sweep-k, propagator, report
"""

from atmgrit.core import (
    Application,
    ArrayVector,
    ATMGRITError,
    ConfigurationError,
    DivergenceError,
    Norm,
    RuntimeFault,
    StateVector,
    random_state,
)
from atmgrit.grids import Hierarchy, LocalCoarseGrid, TimeGrid, build_hierarchy
from atmgrit.solver import ConvergenceReport, InitialGuess, SolverConfig, solve

__version__ = "0.1.0"

__all__ = [
    "Application",
    "ArrayVector",
    "ATMGRITError",
    "ConfigurationError",
    "ConvergenceReport",
    "DivergenceError",
    "Hierarchy",
    "InitialGuess",
    "LocalCoarseGrid",
    "Norm",
    "RuntimeFault",
    "SolverConfig",
    "StateVector",
    "TimeGrid",
    "build_hierarchy",
    "random_state",
    "solve",
]
