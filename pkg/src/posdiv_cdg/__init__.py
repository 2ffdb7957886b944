"""Positivity-preserving, divergence-free central DG for 2D ideal MHD."""

from .errors import ConfigError, DomainError, InadmissibleStateError, StructuralError
from .problems import CATALOG, exact_solution, init_problem
from .solver import Discretization, SolverOptions, SolverState, initial_state, advance, run_problem

__all__ = [
    "CATALOG", "ConfigError", "Discretization", "DomainError", "InadmissibleStateError", "SolverOptions",
    "SolverState", "StructuralError", "advance", "exact_solution", "init_problem", "initial_state", "run_problem",
]
__version__ = "0.1.0"
