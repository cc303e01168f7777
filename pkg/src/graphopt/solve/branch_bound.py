"""Branch-and-bound over the LP core for problems with integer variables."""

from __future__ import annotations

import math
from typing import List, Optional, Tuple

import numpy as np

from ..expr import ModelError
from ..graph import StandardFormProblem
from .lp import SolveResult, SolverConfig, _Arrays

__all__ = ["solve_mip", "solve_problem"]

_INT_TOL = 1e-6
_NODE_LIMIT = 100_000


def solve_problem(p: StandardFormProblem,
                  cfg: Optional[SolverConfig] = None) -> SolveResult:
    """Solve `p` as a MIP if it declares integer variables, else as an LP."""
    from .lp import solve_lp

    if p.has_integer_variables():
        return solve_mip(p, cfg)
    return solve_lp(p, cfg)


def solve_mip(p: StandardFormProblem,
              cfg: Optional[SolverConfig] = None) -> SolveResult:
    """Branch-and-bound with most-fractional branching.

    Depth-first on the fractional variable nearest 0.5, switching to the
    best-bound open node every 100 expansions. Integer-feasible relaxation
    points are re-solved with the integers fixed to their rounded values
    before being accepted as incumbents, so reported solutions are exactly
    integral; until a first incumbent exists, fractional relaxation points
    are rounded and completed the same way so pruning starts immediately.
    Dual values are not defined for MIPs and are left empty.
    """
    cfg = cfg or SolverConfig()
    arrays = _Arrays(p)
    int_idx = np.flatnonzero(arrays.integer)
    if int_idx.size == 0:
        return arrays.result_from(arrays.run_simplex(cfg))

    lower = arrays.lower.copy()
    upper = arrays.upper.copy()
    for j in int_idx:
        if not (math.isfinite(lower[j]) and math.isfinite(upper[j])):
            raise ModelError(
                f"integer variable {arrays.order[j].name} must have finite bounds")
        lower[j] = math.ceil(lower[j] - _INT_TOL)
        upper[j] = math.floor(upper[j] + _INT_TOL)

    best_obj = math.inf
    best_x: Optional[np.ndarray] = None
    iterations = 0
    nodes = 0
    # Open nodes: (parent LP bound, lower vector, upper vector).
    stack: List[Tuple[float, np.ndarray, np.ndarray]] = [(-math.inf, lower, upper)]
    unbounded_root = False

    while stack:
        if nodes >= _NODE_LIMIT:
            break
        # DFS from the tail; periodically pull the best-bound node instead to
        # pull the global lower bound up.
        if nodes % 100 == 99:
            k = min(range(len(stack)), key=lambda i: stack[i][0])
        else:
            k = len(stack) - 1
        parent_bound, lo, up = stack.pop(k)
        if np.any(lo > up):
            continue
        prune_margin = 1e-10 * (1.0 + abs(best_obj)) if best_x is not None else 0.0
        if best_x is not None and parent_bound >= best_obj - prune_margin:
            continue
        nodes += 1
        sr = arrays.run_simplex(cfg, lower=lo, upper=up)
        iterations += sr.iterations
        if sr.status == "infeasible":
            continue
        if sr.status == "unbounded":
            unbounded_root = nodes == 1
            if unbounded_root:
                break
            continue
        if sr.status != "optimal":
            return SolveResult(sr.status, None, iterations=iterations,
                               message=sr.message, nodes_explored=nodes)
        bound = float(arrays.c @ sr.x[: arrays.A.shape[1]] + arrays.c0)
        if best_x is not None and bound >= best_obj - prune_margin:
            continue
        x = sr.x[: arrays.A.shape[1]]
        frac = np.abs(x[int_idx] - np.round(x[int_idx]))
        if np.all(frac <= _INT_TOL):
            cand = _completion(arrays, cfg, lo, up, x, int_idx)
            if cand is not None:
                c_obj, c_x, c_iters = cand
                iterations += c_iters
                if c_obj < best_obj - 1e-12:
                    best_obj, best_x = c_obj, c_x
            continue
        if best_x is None:
            # rounding heuristic: any feasible completion seeds the pruning
            cand = _completion(arrays, cfg, lo, up, x, int_idx)
            if cand is not None:
                best_obj, best_x, c_iters = cand
                iterations += c_iters
        j = int(int_idx[int(np.argmax(np.minimum(frac, 1.0 - frac)))])
        split = x[j]
        lo_hi = lo.copy()
        lo_hi[j] = math.ceil(split)
        up_lo = up.copy()
        up_lo[j] = math.floor(split)
        # Push the "down" child last so DFS explores it first.
        stack.append((bound, lo_hi, up))
        stack.append((bound, lo, up_lo))
        if best_x is not None and stack:
            open_bound = min(b for b, _, _ in stack)
            gap = (best_obj - open_bound) / max(1.0, abs(best_obj))
            if gap <= cfg.mip_gap:
                break

    if unbounded_root:
        return SolveResult("unbounded", None, iterations=iterations,
                           message="LP relaxation is unbounded",
                           nodes_explored=nodes)
    if best_x is None:
        status = "infeasible" if not stack else "iteration_limit"
        return SolveResult(status, None, iterations=iterations,
                           message="no integer-feasible point found",
                           nodes_explored=nodes)
    # proven bound: exact when the tree drained, else the best open node
    tree_bound = float(best_obj)
    if stack:
        tree_bound = min(tree_bound, min(b for b, _, _ in stack))
    primal = {v: float(best_x[j]) for j, v in enumerate(arrays.order)}
    return SolveResult("optimal", float(best_obj), primal, {}, {}, iterations,
                       nodes_explored=nodes, bound=tree_bound)


def _completion(arrays: _Arrays, cfg: SolverConfig, lo: np.ndarray,
                up: np.ndarray, x: np.ndarray, int_idx: np.ndarray):
    """Re-solve with integers fixed to rounded values; return (obj, x, iters)."""
    lo2 = lo.copy()
    up2 = up.copy()
    vals = np.round(x[int_idx])
    lo2[int_idx] = vals
    up2[int_idx] = vals
    sr = arrays.run_simplex(cfg, lower=lo2, upper=up2)
    if sr.status != "optimal":
        return None
    xf = sr.x[: arrays.A.shape[1]]
    obj = float(arrays.c @ xf + arrays.c0)
    return obj, xf.copy(), sr.iterations
