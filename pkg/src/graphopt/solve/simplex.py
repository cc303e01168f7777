"""Two-phase primal simplex for LPs with general variable bounds.

Works on the slack-augmented system `A x + s = b` where every variable
(structural or slack) carries box bounds; nonbasic variables sit at a bound,
basic values come from a dense basis inverse maintained by rank-1 updates
with periodic refactorization. Phase 1 adds signed artificial columns only
for rows whose initial slack value violates the slack bounds, minimizes the
total infeasibility, then retires the artificials (bounds fixed to [0, 0])
for phase 2.

Pricing is Dantzig (largest reduced-cost violation) with a per-column
eligibility threshold `pivot_tol * (1 + |c_j|)`. Stalling is detected on the
phase objective rather than on step lengths: a pivot whose step is large but
whose net objective change is ~0 (a closed orbit sustained by roundoff) looks
nondegenerate to any theta test, so a bounded run of iterations without real
objective improvement escalates instead through deterministic relative cost
jitter (~1e-9, phase 2 only; it breaks the ties sustaining the orbit) and
Bland's rule; the true costs are restored for a final polish once the
jittered problem is solved, and a basis that still turns exactly singular is
retried from scratch under a fresh jitter.

The ratio test only accepts pivot elements above 1e-7 in magnitude: smaller
entries of the transformed column are usually noise from a drifted basis
inverse (dense near-parallel rows make this common), and pivoting on them
corrupts the basis. Whenever the restriction leaves no admissible step and
the factorization is stale, the basis is refactorized and the iteration
retried, so genuine unboundedness is only ever declared from fresh numbers.

Dual sign convention (documented and tested): duals are d(obj)/d(rhs), so
for a minimization problem a `>=` row has dual >= 0, a `<=` row has
dual <= 0, and an `==` row is free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..expr import EQ, GE, LE

__all__ = ["SimplexResult", "simplex_solve"]

AT_LOWER = 0
AT_UPPER = 1
FREE = 2
BASIC = 3

_PIVOT_EPS = 1e-9
_RATIO_EPS = 1e-7  # smallest pivot element the ratio test may select
_REFACTOR_EVERY = 64


@dataclass
class SimplexResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: Optional[np.ndarray]  # structural values
    y: Optional[np.ndarray]  # row duals
    reduced_costs: Optional[np.ndarray]  # structural reduced costs
    iterations: int
    message: str = ""


class _Singular(Exception):
    pass


class _Simplex:
    def __init__(self, A, senses, b, lower, upper, cost, feas_tol, pivot_tol,
                 max_iterations):
        m, n = A.shape
        self.m = m
        self.n_struct = n
        self.feas_tol = feas_tol
        self.pivot_tol = pivot_tol
        self.max_iterations = max_iterations
        self.iterations = 0
        self.b = np.asarray(b, dtype=float)

        slack_lb = np.empty(m)
        slack_ub = np.empty(m)
        for i, sense in enumerate(senses):
            if sense == LE:
                slack_lb[i], slack_ub[i] = 0.0, np.inf
            elif sense == GE:
                slack_lb[i], slack_ub[i] = -np.inf, 0.0
            elif sense == EQ:
                slack_lb[i], slack_ub[i] = 0.0, 0.0
            else:
                raise ValueError(f"unknown sense {sense!r}")

        self.W = np.hstack([np.asarray(A, dtype=float), np.eye(m)])
        self.lb = np.concatenate([np.asarray(lower, dtype=float), slack_lb])
        self.ub = np.concatenate([np.asarray(upper, dtype=float), slack_ub])
        self.c = np.concatenate([np.asarray(cost, dtype=float), np.zeros(m)])
        self.n_real = n + m  # structural + slack; artificials appended after

        x = np.zeros(self.n_real)
        vstatus = np.full(self.n_real, FREE, dtype=np.int8)
        finite_lb = np.isfinite(self.lb)
        finite_ub = np.isfinite(self.ub)
        x[finite_ub] = self.ub[finite_ub]
        vstatus[finite_ub] = AT_UPPER
        x[finite_lb] = self.lb[finite_lb]  # prefer lower when both finite
        vstatus[finite_lb] = AT_LOWER
        self.x = x
        self.vstatus = vstatus

        self.basis = np.arange(n, n + m)
        self.vstatus[self.basis] = BASIC
        self.Binv = np.eye(m)
        xB = self.b - self.W[:, :n] @ self.x[:n]

        # rows whose initial slack value breaks the slack bounds get a signed
        # artificial carrying the residual; the slack moves to the violated bound
        art_cols: List[np.ndarray] = []
        art_lb: List[float] = []
        art_ub: List[float] = []
        art_cost: List[float] = []
        for i in range(m):
            j_slack = n + i
            v = xB[i]
            if self.lb[j_slack] <= v <= self.ub[j_slack]:
                self.x[j_slack] = v
                continue
            bound = self.ub[j_slack] if v > self.ub[j_slack] else self.lb[j_slack]
            self.x[j_slack] = bound
            self.vstatus[j_slack] = AT_UPPER if v > self.ub[j_slack] else AT_LOWER
            residual = v - bound
            col = np.zeros(m)
            col[i] = 1.0
            art_cols.append(col)
            if residual > 0:
                art_lb.append(0.0)
                art_ub.append(np.inf)
                art_cost.append(1.0)
            else:
                art_lb.append(-np.inf)
                art_ub.append(0.0)
                art_cost.append(-1.0)
            j_art = self.n_real + len(art_cols) - 1
            self.basis[i] = j_art
            self.x = np.append(self.x, residual)
            self.vstatus = np.append(self.vstatus, np.int8(BASIC))

        self.n_art = len(art_cols)
        if self.n_art:
            self.W = np.hstack([self.W, np.column_stack(art_cols)])
            self.lb = np.concatenate([self.lb, np.array(art_lb)])
            self.ub = np.concatenate([self.ub, np.array(art_ub)])
            self.c = np.concatenate([self.c, np.zeros(self.n_art)])
        self.n_total = self.n_real + self.n_art
        self.is_art = np.zeros(self.n_total, dtype=bool)
        self.is_art[self.n_real:] = True

        self.phase1_cost = np.zeros(self.n_total)
        if self.n_art:
            self.phase1_cost[self.n_real:] = np.array(art_cost)

        self.bland = False
        self.pivots_since_refactor = 0
        self.stall_limit = min(5 * (m + self.n_total), 1000)

    # -- core machinery ------------------------------------------------------

    def _refactor(self):
        if self.m == 0:
            return
        B = self.W[:, self.basis]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise _Singular
        tmp = self.x.copy()
        tmp[self.basis] = 0.0
        resid = self.b - self.W @ tmp
        self.x[self.basis] = self.Binv @ resid
        self.pivots_since_refactor = 0

    def _duals(self, cost):
        if self.m == 0:
            return np.zeros(0)
        return cost[self.basis] @ self.Binv

    def _price(self, d, cost):
        tol = self.pivot_tol * (1.0 + np.abs(cost))
        nonbasic = self.vstatus != BASIC
        allowed = nonbasic & ~self.is_art & (self.lb < self.ub)
        eligible = allowed & (
            ((self.vstatus == AT_LOWER) & (d < -tol))
            | ((self.vstatus == AT_UPPER) & (d > tol))
            | ((self.vstatus == FREE) & (np.abs(d) > tol)))
        idx = np.nonzero(eligible)[0]
        if idx.size == 0:
            return -1
        if self.bland:
            return int(idx[0])
        return int(idx[np.argmax(np.abs(d[idx]))])

    def _jittered(self, base_cost, round_no):
        """Deterministically jittered copy of `base_cost` for stall escape."""
        rng = np.random.default_rng(1742 + round_no)
        jitter = rng.uniform(1.0, 2.0, base_cost.size)
        return base_cost + 1e-9 * (1.0 + np.abs(base_cost)) * jitter

    def _iterate(self, cost, allow_jitter=False) -> str:
        """Run simplex to optimality for the given cost vector.

        Progress is tracked on the phase objective. When `stall_limit`
        consecutive iterations fail to improve it, the costs get a
        deterministic relative jitter that breaks whatever tie structure
        sustains the orbit (when `allow_jitter` is set; Bland's pricing rule
        joins from the second jitter round), and the true costs are restored
        for a final polish once the jittered problem reaches its optimum.
        Without jitter the escalation is Bland's rule alone.
        """
        base_cost = cost
        best_obj = np.inf
        stall = 0
        rounds = 0
        polishing = False
        while True:
            if self.iterations >= self.max_iterations:
                return "iteration_limit"
            if self.pivots_since_refactor >= _REFACTOR_EVERY:
                self._refactor()

            obj = float(cost @ self.x)
            if obj < best_obj - 1e-9 * (1.0 + abs(best_obj)):
                best_obj = obj
                stall = 0
                self.bland = False
            else:
                stall += 1
                if stall > self.stall_limit:
                    stall = 0
                    if polishing:
                        # already within jitter tolerance of the optimum
                        return "optimal"
                    if allow_jitter and rounds < 3:
                        rounds += 1
                        cost = self._jittered(base_cost, rounds)
                        best_obj = np.inf
                        if rounds >= 2:
                            self.bland = True
                    else:
                        self.bland = True

            y = self._duals(cost)
            d = cost - y @ self.W
            j = self._price(d, cost)
            if j < 0:
                # confirm on a freshly factorized basis before declaring victory
                if self.pivots_since_refactor > 0:
                    self._refactor()
                    y = self._duals(cost)
                    d = cost - y @ self.W
                    j = self._price(d, cost)
                if j < 0:
                    if rounds and not polishing:
                        # optimal for the jittered costs: restore and polish
                        polishing = True
                        cost = base_cost
                        best_obj = np.inf
                        stall = 0
                        continue
                    return "optimal"

            self.iterations += 1
            if self.vstatus[j] == AT_UPPER:
                t = -1.0
            elif self.vstatus[j] == AT_LOWER:
                t = 1.0
            else:
                t = 1.0 if d[j] < 0 else -1.0

            w = self.Binv @ self.W[:, j] if self.m else np.zeros(0)
            delta = -t * w
            lb_b = self.lb[self.basis]
            ub_b = self.ub[self.basis]
            xB = self.x[self.basis]
            theta_rows = np.full(self.m, np.inf)
            up = delta > _RATIO_EPS
            dn = delta < -_RATIO_EPS
            with np.errstate(invalid="ignore"):
                theta_rows[up] = (ub_b[up] - xB[up]) / delta[up]
                theta_rows[dn] = (lb_b[dn] - xB[dn]) / delta[dn]
            theta_rows[~np.isfinite(theta_rows)] = np.inf
            np.maximum(theta_rows, 0.0, out=theta_rows)
            theta_basic = theta_rows.min() if self.m else np.inf

            if self.vstatus[j] != FREE and np.isfinite(self.lb[j]) \
                    and np.isfinite(self.ub[j]):
                theta_self = self.ub[j] - self.lb[j]
            else:
                theta_self = np.inf

            theta = min(theta_basic, theta_self)
            if not np.isfinite(theta):
                # sub-threshold row entries may be stale noise; only a step
                # derived from a fresh factorization may declare unboundedness
                if self.pivots_since_refactor > 0:
                    self._refactor()
                    continue
                return "unbounded"

            if theta_self <= theta_basic:
                # bound flip: variable crosses to its other bound, no pivot
                self.x[self.basis] = xB + theta * delta
                if self.vstatus[j] == AT_LOWER:
                    self.x[j] = self.ub[j]
                    self.vstatus[j] = AT_UPPER
                else:
                    self.x[j] = self.lb[j]
                    self.vstatus[j] = AT_LOWER
                continue

            # leaving row: smallest ratio; break ties by largest pivot element
            # (Bland mode: smallest basis column index)
            tie = theta_rows <= theta_basic + 1e-9 * (1.0 + theta_basic)
            tie &= np.abs(delta) > _RATIO_EPS
            rows = np.nonzero(tie)[0]
            if rows.size == 0:
                rows = np.array([int(np.argmin(theta_rows))])
            if self.bland:
                r = int(rows[np.argmin(self.basis[rows])])
            else:
                r = int(rows[np.argmax(np.abs(delta[rows]))])

            # a pivot this small on a drifted inverse is noise, not a step
            if abs(w[r]) < _RATIO_EPS and self.pivots_since_refactor > 0:
                self._refactor()
                continue

            leaving = self.basis[r]
            self.x[self.basis] = xB + theta * delta
            self.x[j] = self.x[j] + t * theta
            hit_upper = delta[r] > 0
            self.x[leaving] = self.ub[leaving] if hit_upper else self.lb[leaving]
            self.vstatus[leaving] = AT_UPPER if hit_upper else AT_LOWER
            self.vstatus[j] = BASIC
            self.basis[r] = j

            # rank-1 basis inverse update
            piv = w[r]
            if abs(piv) < _PIVOT_EPS:
                self._refactor()
            else:
                self.Binv[r, :] /= piv
                others = np.arange(self.m) != r
                self.Binv[others, :] -= np.outer(w[others], self.Binv[r, :])
                self.pivots_since_refactor += 1

    def _pivot_out_artificials(self):
        """After phase 1, drive basic artificials out where a real pivot exists."""
        if self.m == 0:
            return
        for r in range(self.m):
            if self.basis[r] < self.n_real:
                continue
            row = self.Binv[r, :] @ self.W[:, :self.n_real]
            cand = np.nonzero((self.vstatus[:self.n_real] != BASIC)
                              & (np.abs(row) > 1e-7))[0]
            if cand.size == 0:
                continue  # redundant row: artificial stays basic at 0
            j = int(cand[np.argmax(np.abs(row[cand]))])
            w = self.Binv @ self.W[:, j]
            art = self.basis[r]
            self.vstatus[art] = AT_LOWER
            self.x[art] = 0.0
            self.vstatus[j] = BASIC
            self.basis[r] = j
            piv = w[r]
            self.Binv[r, :] /= piv
            others = np.arange(self.m) != r
            self.Binv[others, :] -= np.outer(w[others], self.Binv[r, :])
            self.pivots_since_refactor += 1

    def run(self) -> SimplexResult:
        try:
            if self.n_art:
                status = self._iterate(self.phase1_cost)
                if status != "optimal":
                    msg = ("phase-1 " + status if status != "unbounded"
                           else "phase-1 lost boundedness (numerical)")
                    return SimplexResult("iteration_limit", None, None, None,
                                         self.iterations, msg)
                infeas = float(self.phase1_cost @ self.x)
                scale = 1.0 + (np.abs(self.b).max() if self.m else 0.0)
                if infeas > self.feas_tol * scale:
                    return SimplexResult("infeasible", None, None, None,
                                         self.iterations,
                                         f"phase-1 infeasibility {infeas:.3e}")
                self._pivot_out_artificials()
                self.lb[self.n_real:] = 0.0
                self.ub[self.n_real:] = 0.0
                for j in range(self.n_real, self.n_total):
                    if self.vstatus[j] != BASIC:
                        self.x[j] = 0.0

            status = self._iterate(self.c, allow_jitter=True)
        except _Singular:
            return SimplexResult("iteration_limit", None, None, None,
                                 self.iterations,
                                 "singular basis during refactorization")
        if status != "optimal":
            return SimplexResult(status, None, None, None, self.iterations)

        y = self._duals(self.c)
        d_full = self.c - y @ self.W
        n = self.n_struct
        return SimplexResult("optimal", self.x[:n].copy(), y.copy(),
                             d_full[:n].copy(), self.iterations)


def simplex_solve(A, senses, b, lower, upper, cost, feas_tol=1e-7,
                  pivot_tol=1e-9, max_iterations=200_000) -> SimplexResult:
    """Solve `min cost @ x  s.t.  A x (senses) b,  lower <= x <= upper`.

    Args:
        A: dense (m, n) coefficient matrix.
        senses: per-row sense strings ("<=", "==", ">=").
        b: right-hand sides (m,).
        lower/upper: variable bounds (n,), +-inf allowed.
        cost: objective coefficients (n,).

    Returns:
        SimplexResult with structural primal values, row duals, and
        structural reduced costs when status is "optimal".
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"A must be 2-D, got shape {A.shape}")
    b = np.asarray(b, dtype=float)
    senses = list(senses)
    # equilibrate only penalty-scale rows (optimality cuts can carry ~1e6
    # entries that wreck basis conditioning); moderate rows pass through
    # untouched so well-scaled problems solve bit-identically
    row_max = np.abs(A).max(axis=1, initial=0.0)
    row_scale = np.where(row_max > 1e3, row_max, 1.0)
    A_eq = A / row_scale[:, None]
    b_eq = b / row_scale
    cvec = np.asarray(cost, dtype=float)
    attempt = 0
    while True:
        solver = _Simplex(A_eq, senses, b_eq, lower, upper, cvec,
                          feas_tol=feas_tol, pivot_tol=pivot_tol,
                          max_iterations=max_iterations)
        result = solver.run()
        if (result.status == "iteration_limit"
                and result.message == "singular basis during refactorization"
                and attempt < 2):
            # a basis driven to exact singularity by stale pivots is not a
            # verdict; restart from scratch with jittered costs, which sends
            # the solve down a different pivot trajectory
            attempt += 1
            rng = np.random.default_rng(9460 + attempt)
            base = np.asarray(cost, dtype=float)
            cvec = base + 1e-9 * (1.0 + np.abs(base)) * rng.uniform(
                1.0, 2.0, base.size)
            continue
        break
    if result.y is not None:
        result.y /= row_scale  # duals are sensitivities to the original rhs
    return result
