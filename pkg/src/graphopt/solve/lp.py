"""LP front end: standard-form-to-array conversion, solve results, variable
fixing, duality checks, and a plain-text problem dump."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from ..expr import EQ, GE, LE, ModelError, VariableBounds, VariableId
from ..graph import StandardFormProblem
from .simplex import SimplexResult, simplex_solve

__all__ = [
    "SolverConfig",
    "SolveResult",
    "solve_lp",
    "fix_variables",
    "duality_residual",
    "write_problem",
]


@dataclass
class SolverConfig:
    """Solver tolerances and limits.

    Attributes:
        feas_tol: primal feasibility tolerance.
        pivot_tol: reduced-cost/pivot eligibility tolerance.
        max_iterations: total simplex iteration budget per solve.
        mip_gap: relative optimality gap at which branch-and-bound may stop.
    """

    feas_tol: float = 1e-7
    pivot_tol: float = 1e-9
    max_iterations: int = 200_000
    mip_gap: float = 1e-6

    def __post_init__(self):
        for name in ("feas_tol", "pivot_tol", "mip_gap"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive")
        if self.max_iterations <= 0:
            raise ModelError("max_iterations must be positive")


@dataclass
class SolveResult:
    """Outcome of an LP or MIP solve.

    `duals` maps row index (position in `rows`) to the row dual under the
    convention dual = d(objective)/d(rhs): >= rows have nonnegative duals,
    <= rows nonpositive, == rows free. `reduced_costs` carries the
    per-variable objective sensitivity at the final basis (LP only).

    `bound` is the proven lower bound on the optimum: equal to `objective`
    for LPs and for branch-and-bound runs that drain the tree, and the best
    open-node bound when the search stopped at its relative gap.
    """

    status: str
    objective: Optional[float]
    primal: Dict[VariableId, float] = field(default_factory=dict)
    duals: Dict[int, float] = field(default_factory=dict)
    reduced_costs: Dict[VariableId, float] = field(default_factory=dict)
    iterations: int = 0
    message: str = ""
    nodes_explored: int = 0
    bound: Optional[float] = None


class _Arrays:
    """Dense array image of a StandardFormProblem."""

    def __init__(self, p: StandardFormProblem):
        self.order: List[VariableId] = list(p.variable_order)
        self.index: Dict[VariableId, int] = {v: i for i, v in enumerate(self.order)}
        if len(self.index) != len(self.order):
            raise ModelError("variable_order contains duplicates")
        n = len(self.order)
        m = len(p.rows)
        self.A = np.zeros((m, n))
        self.b = np.zeros(m)
        self.senses: List[str] = []
        for i, con in enumerate(p.rows):
            for key, coef in con.body.terms.items():
                j = self.index.get(key)
                if j is None:
                    raise ModelError(f"row {i} references unknown variable {key!r}")
                self.A[i, j] = coef
            self.b[i] = con.rhs - con.body.constant
            self.senses.append(con.sense)
        self.lower = np.array([p.bounds[v].lower for v in self.order]) \
            if n else np.zeros(0)
        self.upper = np.array([p.bounds[v].upper for v in self.order]) \
            if n else np.zeros(0)
        self.integer = np.array([p.bounds[v].is_integer for v in self.order],
                                dtype=bool) if n else np.zeros(0, dtype=bool)
        self.c = np.zeros(n)
        for key, coef in p.objective.terms.items():
            j = self.index.get(key)
            if j is None:
                raise ModelError(f"objective references unknown variable {key!r}")
            self.c[j] = coef
        self.c0 = p.objective.constant
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.c))):
            raise ModelError("non-finite coefficient in problem data")

    def run_simplex(self, cfg: SolverConfig, lower=None, upper=None) -> SimplexResult:
        return simplex_solve(
            self.A, self.senses, self.b,
            self.lower if lower is None else lower,
            self.upper if upper is None else upper,
            self.c,
            feas_tol=cfg.feas_tol, pivot_tol=cfg.pivot_tol,
            max_iterations=cfg.max_iterations)

    def result_from(self, sr: SimplexResult) -> SolveResult:
        if sr.status != "optimal":
            return SolveResult(sr.status, None, iterations=sr.iterations,
                               message=sr.message)
        primal = {v: float(sr.x[j]) for j, v in enumerate(self.order)}
        duals = {i: float(sr.y[i]) for i in range(len(self.b))}
        rc = {v: float(sr.reduced_costs[j]) for j, v in enumerate(self.order)}
        obj = float(self.c @ sr.x + self.c0)
        return SolveResult("optimal", obj, primal, duals, rc, sr.iterations,
                           sr.message, bound=obj)


def solve_lp(p: StandardFormProblem, cfg: Optional[SolverConfig] = None) -> SolveResult:
    """Solve the LP (relaxation) of a standard-form problem.

    Integrality markers are ignored here; `solve_mip` handles them.
    """
    cfg = cfg or SolverConfig()
    arrays = _Arrays(p)
    return arrays.result_from(arrays.run_simplex(cfg))


def fix_variables(p: StandardFormProblem,
                  assignments: Mapping[VariableId, float]) -> StandardFormProblem:
    """Return a copy of `p` with each assigned variable fixed (lower=upper).

    The row set is unchanged, so row duals stay comparable across repeated
    fixings. Values must lie within the variable's current bounds.
    """
    out = p.copy()
    for vid, value in assignments.items():
        b = out.bounds.get(vid)
        if b is None:
            raise ModelError(f"unknown variable {vid!r}")
        v = float(value)
        if not math.isfinite(v):
            raise ModelError(f"cannot fix {vid.name} to non-finite {value!r}")
        if v < b.lower - 1e-9 or v > b.upper + 1e-9:
            raise ModelError(
                f"fixing {vid.name} to {v} violates bounds [{b.lower}, {b.upper}]")
        out.bounds[vid] = VariableBounds(v, v, b.integrality)
    return out


def duality_residual(p: StandardFormProblem, res: SolveResult) -> float:
    """Relative strong-duality residual |primal - dual| / (1 + |primal|).

    The dual objective is built from row duals and reduced costs against the
    variable bounds (not the primal point), so it is an independent check:
    dual = sum_i y_i b_i + sum_j min(d_j l_j, d_j u_j) + constant, with
    reduced costs inside tolerance snapped to zero.
    """
    if res.status != "optimal":
        raise ModelError("duality residual is defined for optimal solves only")
    dual = p.objective.constant
    for i, con in enumerate(p.rows):
        dual += res.duals[i] * (con.rhs - con.body.constant)
    for vid in p.variable_order:
        d = res.reduced_costs[vid]
        obj_coef = p.objective.terms.get(vid, 0.0)
        if abs(d) <= 1e-9 * (1.0 + abs(obj_coef)):
            continue
        bnd = p.bounds[vid]
        edge = bnd.lower if d > 0 else bnd.upper
        if not math.isfinite(edge):
            return math.inf
        dual += d * edge
    return abs(res.objective - dual) / (1.0 + abs(res.objective))


def write_problem(p: StandardFormProblem, path: str) -> None:
    """Write a fixed-format text dump: objective, rows with sense/rhs, bounds."""
    arrays = _Arrays(p)
    lines = []
    obj_terms = " + ".join(f"{arrays.c[j]!r}*{v.name}"
                           for j, v in enumerate(arrays.order) if arrays.c[j] != 0.0)
    lines.append(f"minimize : {obj_terms or '0.0'}"
                 + (f" + {arrays.c0!r}" if arrays.c0 else ""))
    for i, con in enumerate(p.rows):
        body = " + ".join(
            f"{coef!r}*{key.name}"
            for key, coef in sorted(con.body.terms.items(), key=lambda kv: kv[0].name))
        lines.append(f"row {i} : {body or '0.0'} {con.sense} {arrays.b[i]!r}")
    for v in arrays.order:
        b = p.bounds[v]
        lines.append(f"bound : {v.name} in [{b.lower!r}, {b.upper!r}] {b.integrality}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
