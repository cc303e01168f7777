"""LP solver: handcrafted cases, a random battery vs the vertex oracle,
duality, sensitivity, and status edge cases."""

import math

import numpy as np
import pytest

from graphopt import (
    AffineExpr,
    Constraint,
    EQ,
    GE,
    LE,
    ModelError,
    SolverConfig,
    StandardFormProblem,
    VariableBounds,
    VariableId,
    duality_residual,
    fix_variables,
    solve_lp,
)
from oracles import fd_row_dual, random_lp_problem, vertex_lp_solve


def make_problem(c, rows, bounds):
    """Assemble a StandardFormProblem from plain dicts keyed by name."""
    names = sorted(bounds)
    vids = {name: VariableId("lp", i, name) for i, name in enumerate(names)}
    return StandardFormProblem(
        objective=AffineExpr({vids[k]: v for k, v in c.items()}),
        rows=[Constraint(AffineExpr({vids[k]: v for k, v in terms.items()}),
                         sense, rhs) for terms, sense, rhs in rows],
        bounds={vids[k]: VariableBounds(*b) for k, b in bounds.items()},
        variable_order=[vids[k] for k in names],
    ), vids


def test_textbook_lp():
    # max x + y  s.t.  x + 2y <= 4, 3x + y <= 6   ->  min form
    p, v = make_problem(
        {"x": -1.0, "y": -1.0},
        [({"x": 1.0, "y": 2.0}, LE, 4.0), ({"x": 3.0, "y": 1.0}, LE, 6.0)],
        {"x": (0.0, 10.0), "y": (0.0, 10.0)})
    res = solve_lp(p)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-2.8, abs=1e-9)
    assert res.primal[v["x"]] == pytest.approx(1.6, abs=1e-9)
    assert res.primal[v["y"]] == pytest.approx(1.2, abs=1e-9)
    # both rows active with negative duals (<= rows, minimize convention)
    assert res.duals[0] < 0 and res.duals[1] < 0
    assert duality_residual(p, res) < 1e-9


def test_bounds_only_problem():
    p, v = make_problem({"x": 2.0, "y": -3.0}, [],
                        {"x": (-1.0, 5.0), "y": (-2.0, 4.0)})
    res = solve_lp(p)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-14.0)
    assert res.primal[v["x"]] == -1.0 and res.primal[v["y"]] == 4.0


def test_infeasible_detected():
    p, _ = make_problem(
        {"x": 1.0},
        [({"x": 1.0}, GE, 5.0), ({"x": 1.0}, LE, 1.0)],
        {"x": (0.0, 10.0)})
    assert solve_lp(p).status == "infeasible"


def test_unbounded_detected():
    p, _ = make_problem({"x": -1.0}, [({"x": 1.0}, GE, 0.0)],
                        {"x": (0.0, math.inf)})
    assert solve_lp(p).status == "unbounded"


def test_equality_and_free_variable():
    p, v = make_problem(
        {"x": 1.0, "y": 1.0},
        [({"x": 1.0, "y": 1.0}, EQ, 3.0), ({"x": 1.0, "y": -1.0}, LE, 1.0)],
        {"x": (-math.inf, math.inf), "y": (0.0, 2.0)})
    res = solve_lp(p)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(3.0)
    assert res.primal[v["x"]] + res.primal[v["y"]] == pytest.approx(3.0)


def test_degenerate_lp_terminates():
    # many redundant rows through the same vertex
    rows = [({"x": 1.0, "y": 1.0}, LE, 1.0),
            ({"x": 2.0, "y": 2.0}, LE, 2.0),
            ({"x": 3.0, "y": 3.0}, LE, 3.0),
            ({"x": 1.0}, LE, 1.0), ({"y": 1.0}, LE, 1.0)]
    p, _ = make_problem({"x": -1.0, "y": -1.0}, rows,
                        {"x": (0.0, 9.0), "y": (0.0, 9.0)})
    res = solve_lp(p)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-1.0)


def test_iteration_limit_reported():
    p, _ = make_problem(
        {"x": -1.0, "y": -1.0},
        [({"x": 1.0, "y": 2.0}, LE, 4.0), ({"x": 3.0, "y": 1.0}, LE, 6.0)],
        {"x": (0.0, 10.0), "y": (0.0, 10.0)})
    res = solve_lp(p, SolverConfig(max_iterations=1))
    assert res.status == "iteration_limit"
    assert res.objective is None


def test_fixed_variables_and_constant_objective():
    p, v = make_problem({"x": 1.0}, [], {"x": (2.0, 2.0)})
    p.objective = p.objective + 10.0
    res = solve_lp(p)
    assert res.objective == pytest.approx(12.0)


def test_unknown_variable_in_row_rejected():
    p, _ = make_problem({"x": 1.0}, [], {"x": (0.0, 1.0)})
    ghost = VariableId("elsewhere", 0, "ghost")
    p.rows = [Constraint(AffineExpr({ghost: 1.0}), LE, 1.0)]
    with pytest.raises(ModelError, match="unknown variable"):
        solve_lp(p)


def test_nonfinite_coefficient_rejected():
    p, v = make_problem({"x": 1.0}, [({"x": 1.0}, LE, 1.0)],
                        {"x": (0.0, 1.0)})
    p.objective = AffineExpr({list(v.values())[0]: 1.0})
    bad = Constraint(AffineExpr({list(v.values())[0]: 1.0}), LE, 1.0)
    object.__setattr__(bad, "rhs", math.inf)
    p.rows = [bad]
    with pytest.raises(ModelError):
        solve_lp(p)


# -- randomized battery ------------------------------------------------------------


def test_random_battery_matches_vertex_oracle():
    rng = np.random.default_rng(2024)
    statuses = {"optimal": 0, "infeasible": 0}
    for _ in range(60):
        prob, (c, A, senses, b, lo, up) = random_lp_problem(rng)
        res = solve_lp(prob)
        status, obj, _ = vertex_lp_solve(c, A, senses, b, lo, up)
        assert res.status == status
        statuses[status] += 1
        if status == "optimal":
            assert res.objective == pytest.approx(obj, rel=1e-7, abs=1e-7)
            assert duality_residual(prob, res) <= 1e-6
    assert statuses["optimal"] >= 30  # generator keeps most feasible
    assert statuses["infeasible"] >= 1


# -- duals and sensitivity -----------------------------------------------------------


def test_duals_match_finite_differences():
    p, _ = make_problem(
        {"x": -2.0, "y": -3.0},
        [({"x": 1.0, "y": 1.0}, LE, 4.0),
         ({"x": 1.0, "y": 3.0}, LE, 6.0),
         ({"x": 1.0, "y": -1.0}, GE, -5.0)],
        {"x": (0.0, 10.0), "y": (0.0, 10.0)})
    res = solve_lp(p)
    assert res.status == "optimal"
    for i in range(3):
        assert res.duals[i] == pytest.approx(fd_row_dual(p, i), abs=1e-6)


def test_dual_signs_by_sense():
    rng = np.random.default_rng(5)
    for _ in range(25):
        prob, _ = random_lp_problem(rng)
        res = solve_lp(prob)
        if res.status != "optimal":
            continue
        for i, con in enumerate(prob.rows):
            if con.sense == LE:
                assert res.duals[i] <= 1e-9
            elif con.sense == GE:
                assert res.duals[i] >= -1e-9


def test_fix_variables_reduced_cost_sensitivity():
    p, v = make_problem(
        {"x": -2.0, "y": -3.0, "z": 1.5},
        [({"x": 1.0, "y": 1.0, "z": 1.0}, LE, 4.0),
         ({"x": 1.0, "y": 3.0}, LE, 6.0)],
        {"x": (0.0, 10.0), "y": (0.0, 10.0), "z": (0.0, 10.0)})
    base = solve_lp(fix_variables(p, {v["z"]: 1.0}))
    assert base.status == "optimal"
    h = 1e-5
    up = solve_lp(fix_variables(p, {v["z"]: 1.0 + h}))
    dn = solve_lp(fix_variables(p, {v["z"]: 1.0 - h}))
    fd = (up.objective - dn.objective) / (2 * h)
    assert base.reduced_costs[v["z"]] == pytest.approx(fd, abs=1e-6)


def test_fix_variables_validates():
    p, v = make_problem({"x": 1.0}, [], {"x": (0.0, 1.0)})
    with pytest.raises(ModelError, match="violates bounds"):
        fix_variables(p, {v["x"]: 2.0})
    with pytest.raises(ModelError, match="unknown"):
        fix_variables(p, {VariableId("nope", 0, "q"): 0.5})
    fixed = fix_variables(p, {v["x"]: 0.5})
    assert fixed.bounds[v["x"]].is_fixed
    assert p.bounds[v["x"]].upper == 1.0  # original untouched
