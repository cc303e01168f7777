"""Parametric subproblem template for decomposition.

A template is a subproblem LP extended with one copy column per complicating
(master) variable: each link row has its master variables substituted by the
copies, and each copy is pinned by an equality fixing row `copy == value`
whose right-hand side is updated per evaluation. The duals of the fixing
rows are then exactly the sensitivities of the subproblem value to the
master assignment, i.e. the cut coefficients. Optional recourse slacks
(s+, s- >= 0, penalized in the objective) keep every evaluation feasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .expr import EQ, AffineExpr, Constraint, ModelError, VariableBounds, VariableId
from .graph import StandardFormProblem
from .solve.lp import SolverConfig, _Arrays

__all__ = ["LinkRow", "SubTemplate", "EvalResult", "build_sub_template",
           "interval_objective_bound"]

# Term key in a link row: a subproblem VariableId, or the string key of a
# master variable (opaque to the subproblem side).
TermKey = Union[VariableId, str]


@dataclass
class LinkRow:
    """A linking constraint with master variables reduced to string keys."""

    terms: Dict[TermKey, float]
    sense: str
    rhs: float


@dataclass
class EvalResult:
    status: str
    value: float
    duals: List[float]
    slack_activity: float
    iterations: int


def interval_objective_bound(p: StandardFormProblem) -> float:
    """Lower bound on the objective over the variable box (ignoring rows)."""
    total = p.objective.constant
    for vid, coef in p.objective.terms.items():
        b = p.bounds[vid]
        cand = min(coef * b.lower, coef * b.upper)
        if math.isnan(cand) or cand == -math.inf:
            return -math.inf
        total += cand
    return total


class SubTemplate:
    """A subproblem parameterized by the master assignment on its fixing rows."""

    def __init__(self, problem: StandardFormProblem, master_keys: List[str],
                 fixing_rows: List[int], slack_vids: List[VariableId],
                 value_lower_bound: float):
        self.problem = problem
        self.master_keys = master_keys
        self.fixing_rows = fixing_rows
        self.slack_vids = slack_vids
        self.value_lower_bound = value_lower_bound
        self._arrays = _Arrays(problem)
        self._slack_cols = np.array(
            [self._arrays.index[v] for v in slack_vids], dtype=int)

    def evaluate(self, xhat: Sequence[float],
                 cfg: Optional[SolverConfig] = None) -> EvalResult:
        """Solve with the copies fixed to `xhat` (one value per master key)."""
        if len(xhat) != len(self.master_keys):
            raise ModelError(
                f"expected {len(self.master_keys)} master values, got {len(xhat)}")
        cfg = cfg or SolverConfig()
        for row, value in zip(self.fixing_rows, xhat):
            self._arrays.b[row] = float(value)
        sr = self._arrays.run_simplex(cfg)
        if sr.status != "optimal":
            return EvalResult(sr.status, math.nan, [], math.nan, sr.iterations)
        value = float(self._arrays.c @ sr.x + self._arrays.c0)
        duals = [float(sr.y[row]) for row in self.fixing_rows]
        slack = float(np.sum(np.abs(sr.x[self._slack_cols]))) \
            if self._slack_cols.size else 0.0
        return EvalResult("optimal", value, duals, slack, sr.iterations)


def build_sub_template(sub: StandardFormProblem, links: Sequence[LinkRow],
                       master_keys: Sequence[str],
                       master_bounds: Dict[str, Tuple[float, float]],
                       penalty: float, add_slacks: bool) -> SubTemplate:
    """Assemble a SubTemplate from a subproblem and its linking rows.

    `master_keys` fixes the copy/fixing-row order; `master_bounds` gives each
    copy the master variable's box (integrality never crosses into the
    subproblem). Raises if the subproblem itself declares integer variables,
    since its duals drive the cuts.
    """
    if sub.has_integer_variables():
        raise ModelError("subproblem declares integer variables; "
                         "duals are required, so subproblems must be LPs")
    value_lb = interval_objective_bound(sub)
    p = sub.copy()
    keys = list(master_keys)
    copies: Dict[str, VariableId] = {}
    for pos, key in enumerate(keys):
        vid = VariableId("@copy", pos, f"@copy[{key}]")
        lo, hi = master_bounds.get(key, (-math.inf, math.inf))
        p.bounds[vid] = VariableBounds(lo, hi)
        p.variable_order.append(vid)
        copies[key] = vid
    for link in links:
        terms: Dict[VariableId, float] = {}
        for key, coef in link.terms.items():
            if isinstance(key, str):
                if key not in copies:
                    raise ModelError(
                        f"link row references unknown master key {key!r}")
                target = copies[key]
            else:
                target = key
            terms[target] = terms.get(target, 0.0) + float(coef)
        p.rows.append(Constraint(AffineExpr(terms), link.sense, link.rhs))
        p.row_provenance.append(("link", ""))
    fixing_rows: List[int] = []
    slack_vids: List[VariableId] = []
    extra_cost: Dict[VariableId, float] = {}
    for pos, key in enumerate(keys):
        terms = {copies[key]: 1.0}
        if add_slacks:
            up = VariableId("@slack", 2 * pos, f"@slack_up[{key}]")
            dn = VariableId("@slack", 2 * pos + 1, f"@slack_dn[{key}]")
            for s in (up, dn):
                p.bounds[s] = VariableBounds(0.0, math.inf)
                p.variable_order.append(s)
                extra_cost[s] = penalty
                slack_vids.append(s)
            terms[up] = 1.0
            terms[dn] = -1.0
        fixing_rows.append(len(p.rows))
        p.rows.append(Constraint(AffineExpr(terms), EQ, 0.0))
        p.row_provenance.append(("fixing", key))
    if extra_cost:
        p.objective = p.objective + AffineExpr(extra_cost)
    return SubTemplate(p, keys, fixing_rows, slack_vids, value_lb)
