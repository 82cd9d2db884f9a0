"""Linear and 0-1 mixed-integer subproblem solver."""

from .milp import MilpOptions, solve_milp
from .program import LinearProgram, LpSolution, SolverError, certificate, relax, write_lp
from .simplex import AT_LOWER, AT_UPPER, AT_ZERO, BASIC, SimplexSolver, solve_lp

__all__ = [
    "AT_LOWER",
    "AT_UPPER",
    "AT_ZERO",
    "BASIC",
    "LinearProgram",
    "LpSolution",
    "MilpOptions",
    "SimplexSolver",
    "SolverError",
    "certificate",
    "relax",
    "solve_lp",
    "solve_milp",
    "write_lp",
]
