"""Solver layer: revised simplex core, LP front end, and branch-and-bound."""

from .branch_bound import solve_mip, solve_problem
from .lp import (
    SolveResult,
    SolverConfig,
    duality_residual,
    fix_variables,
    solve_lp,
    write_problem,
)
from .simplex import simplex_solve

__all__ = [
    "SolverConfig",
    "SolveResult",
    "solve_lp",
    "solve_mip",
    "solve_problem",
    "fix_variables",
    "duality_residual",
    "write_problem",
    "simplex_solve",
]
