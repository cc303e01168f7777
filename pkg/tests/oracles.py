"""Independent solution oracles for validating the solver.

Nothing here shares code with the simplex or branch-and-bound paths: LPs are
solved by enumerating basic points (every subset of n active constraints),
binary MIPs by exhaustive enumeration over {0,1}^n, and sensitivities by
central finite differences. All of it is brute force on purpose.
"""

from __future__ import annotations

import itertools
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from graphopt import (
    EQ,
    GE,
    LE,
    AffineExpr,
    Constraint,
    SolverConfig,
    StandardFormProblem,
    VariableBounds,
    VariableId,
    solve_lp,
)

FEAS_TOL = 1e-8


# -- vertex enumeration for box-bounded LPs ------------------------------------


def vertex_lp_solve(c, A, senses: Sequence[str], b, lower, upper,
                    feas_tol: float = FEAS_TOL):
    """Minimize c@x over {A x (senses) b, lower <= x <= upper} by enumeration.

    Requires finite bounds on every variable, which makes the feasible set a
    polytope: if it is nonempty the optimum is attained at a point where n
    linearly independent constraints (rows or bounds) hold with equality, and
    all such points are enumerated. Returns (status, objective, x).
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(len(senses), c.size)
    b = np.asarray(b, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = c.size
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
        raise ValueError("vertex oracle needs finite bounds")

    # constraint pool: every row plus both bound rows per variable; any
    # vertex has n linearly independent active constraints from this pool
    # (equality rows included), so plain size-n subsets cover all vertices
    # even when equality rows are redundant or degenerate
    eye = np.eye(n)
    pool_G = np.vstack([A, eye, eye])
    pool_h = np.concatenate([b, lower, upper])
    sel = np.array(list(itertools.combinations(range(pool_G.shape[0]), n)),
                   dtype=int)
    M = pool_G[sel]                      # (C, n, n)
    rhs = pool_h[sel]                    # (C, n)
    dets = np.abs(np.linalg.det(M))
    keep = dets > 1e-10
    if not np.any(keep):
        return "infeasible", None, None
    X = np.linalg.solve(M[keep], rhs[keep][..., None])[..., 0]
    ok = _feasible(X, A, senses, b, lower, upper, feas_tol)
    if not np.any(ok):
        return "infeasible", None, None
    objs = X[ok] @ c
    j = int(np.argmin(objs))
    return "optimal", float(objs[j]), X[ok][j]


def _feasible(X, A, senses, b, lower, upper, tol):
    """Row + bound feasibility mask for a batch of points X (C, n)."""
    ok = np.all(X >= lower - tol, axis=1) & np.all(X <= upper + tol, axis=1)
    if len(senses):
        R = X @ A.T                      # (C, m)
        for i, s in enumerate(senses):
            slack = tol * (1.0 + abs(b[i]))
            if s == LE:
                ok &= R[:, i] <= b[i] + slack
            elif s == GE:
                ok &= R[:, i] >= b[i] - slack
            else:
                ok &= np.abs(R[:, i] - b[i]) <= slack
    return ok


# -- exhaustive enumeration for binary MIPs -------------------------------------


def exhaustive_binary_mip(c, A, senses: Sequence[str], b):
    """Minimize c@x over binary x subject to A x (senses) b, by enumeration.

    All data should be integral so feasibility checks and objectives are
    exact in float64. Returns (status, objective, x).
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    A = np.asarray(A, dtype=float).reshape(len(senses), n)
    b = np.asarray(b, dtype=float)
    codes = np.arange(2 ** n, dtype=np.int64)
    X = ((codes[:, None] >> np.arange(n)) & 1).astype(float)
    ok = np.ones(len(X), dtype=bool)
    if len(senses):
        R = X @ A.T
        for i, s in enumerate(senses):
            if s == LE:
                ok &= R[:, i] <= b[i]
            elif s == GE:
                ok &= R[:, i] >= b[i]
            else:
                ok &= R[:, i] == b[i]
    if not np.any(ok):
        return "infeasible", None, None
    objs = X[ok] @ c
    j = int(np.argmin(objs))
    return "optimal", float(objs[j]), X[ok][j]


# -- finite differences ----------------------------------------------------------


def fd_row_dual(p: StandardFormProblem, row: int, h: float = 1e-5,
                cfg: Optional[SolverConfig] = None) -> float:
    """Central-difference estimate of d(objective)/d(rhs) for one row."""
    def value(delta: float) -> float:
        q = p.copy()
        con = q.rows[row]
        q.rows = list(q.rows)
        q.rows[row] = Constraint(con.body, con.sense, con.rhs + delta)
        res = solve_lp(q, cfg)
        if res.status != "optimal":
            raise ValueError(f"perturbed problem is {res.status}")
        return res.objective

    return (value(h) - value(-h)) / (2.0 * h)


# -- random instance generators --------------------------------------------------


def random_lp_problem(rng: np.random.Generator):
    """A random box-bounded LP in both solver and oracle forms.

    Returns (StandardFormProblem, (c, A, senses, b, lower, upper)). About
    three quarters of instances are feasible by construction (rhs drawn
    around an interior point); the rest may be infeasible.
    """
    n = int(rng.integers(1, 7))
    m = int(rng.integers(1, 9))
    A = np.round(rng.uniform(-5.0, 5.0, size=(m, n)), 3)
    A[rng.random(size=(m, n)) < 0.35] = 0.0
    lower = np.round(rng.uniform(-5.0, 0.0, size=n), 3)
    upper = lower + np.round(rng.uniform(0.5, 6.0, size=n), 3)
    c = np.round(rng.uniform(-5.0, 5.0, size=n), 3)

    senses: List[str] = []
    max_eq = max(0, n - 1)
    n_eq = 0
    for _ in range(m):
        r = rng.random()
        if r < 0.2 and n_eq < max_eq:
            senses.append(EQ)
            n_eq += 1
        elif r < 0.6:
            senses.append(LE)
        else:
            senses.append(GE)

    x0 = rng.uniform(lower, upper)
    b = A @ x0
    if rng.random() < 0.75:
        for i, s in enumerate(senses):
            margin = float(np.round(rng.uniform(0.0, 3.0), 3))
            if s == LE:
                b[i] += margin
            elif s == GE:
                b[i] -= margin
    else:
        jitter = np.round(rng.uniform(-4.0, 4.0, size=m), 3)
        b = b + jitter
    b = np.round(b, 6)

    vids = [VariableId("battery", j, f"x{j}") for j in range(n)]
    rows = [Constraint(AffineExpr({vids[j]: float(A[i, j])
                                   for j in range(n) if A[i, j] != 0.0}),
                       senses[i], float(b[i])) for i in range(m)]
    problem = StandardFormProblem(
        objective=AffineExpr({vids[j]: float(c[j])
                              for j in range(n) if c[j] != 0.0}),
        rows=rows,
        bounds={vids[j]: VariableBounds(float(lower[j]), float(upper[j]))
                for j in range(n)},
        variable_order=vids,
    )
    return problem, (c, A, senses, b, lower, upper)


def random_binary_mip(rng: np.random.Generator):
    """A random all-binary MIP with integral data, in both forms."""
    n = int(rng.integers(2, 13))
    m = int(rng.integers(1, 7))
    A = rng.integers(-4, 5, size=(m, n)).astype(float)
    c = rng.integers(-9, 10, size=n).astype(float)
    senses = [str(rng.choice([LE, GE, EQ], p=[0.55, 0.35, 0.1]))
              for _ in range(m)]
    x0 = rng.integers(0, 2, size=n).astype(float)
    b = A @ x0
    for i, s in enumerate(senses):
        slack = int(rng.integers(0, 4))
        if s == LE:
            b[i] += slack
        elif s == GE:
            b[i] -= slack

    vids = [VariableId("knapsack", j, f"z{j}") for j in range(n)]
    rows = [Constraint(AffineExpr({vids[j]: float(A[i, j])
                                   for j in range(n) if A[i, j] != 0.0}),
                       senses[i], float(b[i])) for i in range(m)]
    problem = StandardFormProblem(
        objective=AffineExpr({vids[j]: float(c[j])
                              for j in range(n) if c[j] != 0.0}),
        rows=rows,
        bounds={vids[j]: VariableBounds(0.0, 1.0, "integer")
                for j in range(n)},
        variable_order=vids,
    )
    return problem, (c, A, senses, b)
