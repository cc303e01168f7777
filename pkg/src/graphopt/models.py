"""Worked models: storage sizing/inventory and a toy capacity-expansion model.

Both models come in local and remote builds that share the same population
code (the node/graph construction surfaces are call-compatible), so the
remote builds collect back to canonically identical graphs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .expr import CONTINUOUS, INTEGER, ModelError, VariableBounds
from .graph import OptiGraph

__all__ = [
    "StorageParams",
    "build_storage_local",
    "build_storage_remote",
    "CemParams",
    "CemData",
    "generate_cem_data",
    "build_toy_cem_local",
    "build_toy_cem_remote",
]


# -- storage sizing/inventory model ---------------------------------------------


def _default_gamma(T: int) -> List[float]:
    # base sell price 5, mid-season bump to 20 (periods 8-10), late-season
    # spike to 50 (period 16 on); periods are 1-based
    gamma = []
    for t in range(1, T + 1):
        if t >= 16:
            gamma.append(50.0)
        elif 8 <= t <= 10:
            gamma.append(20.0)
        else:
            gamma.append(5.0)
    return gamma


@dataclass
class StorageParams:
    """Data for the storage model: sizing cost, prices, rates, and limits."""

    T: int = 20
    alpha: float = 10.0
    beta: Optional[Sequence[float]] = None
    gamma: Optional[Sequence[float]] = None
    zeta: float = 2.0
    d_sell: float = 50.0
    d_save: float = 20.0
    d_buy: float = 15.0
    y_bar: float = 10.0

    def __post_init__(self):
        if self.T < 1:
            raise ModelError(f"T must be >= 1, got {self.T}")
        if self.beta is None:
            self.beta = [20.0] * self.T
        if self.gamma is None:
            self.gamma = _default_gamma(self.T)
        self.beta = [float(b) for b in self.beta]
        self.gamma = [float(c) for c in self.gamma]
        if len(self.beta) != self.T or len(self.gamma) != self.T:
            raise ModelError("beta and gamma must have one entry per period")
        for name in ("d_sell", "d_save", "d_buy", "y_bar"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be >= 0")


def _populate_storage(planning_graph, operation_graph, p: StorageParams):
    """Fill the two subgraphs; returns (size variable, stored variables)."""
    planning_node = planning_graph.add_node("planning_node")
    size = planning_node.add_variable(
        "storage_size", VariableBounds(0.0, math.inf))
    planning_node.set_objective(p.alpha * size)

    stored, saved = [], []
    for t in range(1, p.T + 1):
        node = operation_graph.add_node(f"operation_node{t}")
        y_stored = node.add_variable("y_stored", VariableBounds(0.0, math.inf))
        y_sell = node.add_variable("y_sell", VariableBounds(0.0, p.d_sell))
        y_save = node.add_variable("y_save",
                                   VariableBounds(-p.d_save, p.d_save))
        x_buy = node.add_variable("x_buy", VariableBounds(0.0, p.d_buy))
        node.add_constraint((y_save + y_sell - p.zeta * x_buy).eq(0.0))
        if t == 1:
            node.add_constraint(y_stored.eq(p.y_bar))
        node.set_objective(p.beta[t - 1] * x_buy - p.gamma[t - 1] * y_sell)
        stored.append(y_stored)
        saved.append(y_save)
    for t in range(1, p.T):  # inventory balance between consecutive periods
        operation_graph.add_link_constraint(
            (stored[t] - stored[t - 1] - saved[t]).eq(0.0))
    return size, stored


def _link_storage(g, size, stored) -> None:
    for y_stored in stored:
        g.add_link_constraint((y_stored - size) <= 0.0)


def build_storage_local(params: Optional[StorageParams] = None
                        ) -> Tuple[OptiGraph, OptiGraph]:
    """Build the storage model locally; returns (graph, planning subgraph)."""
    p = params or StorageParams()
    g = OptiGraph("storage")
    planning = g.add_subgraph(OptiGraph("planning_graph"))
    operations = g.add_subgraph(OptiGraph("operation_graph"))
    size, stored = _populate_storage(planning, operations, p)
    _link_storage(g, size, stored)
    return g, planning


def build_storage_remote(registry, params: Optional[StorageParams] = None,
                         workers: Optional[Sequence[int]] = None):
    """Build the storage model across two workers.

    Planning goes on ``workers[0]`` and operations on ``workers[1]``
    (defaults: the first two non-coordinator workers); the enclosing graph
    lives on worker 1. Returns (remote graph, planning remote subgraph).
    """
    p = params or StorageParams()
    if workers is None:
        workers = [w for w in registry.worker_ids if w != 1]
    if len(workers) < 2:
        raise ModelError(
            f"storage remote build needs at least 2 workers, have "
            f"{len(workers)}")
    g = registry.remote_graph(1, "storage")
    planning = g.add_subgraph(
        registry.remote_graph(workers[0], "planning_graph"))
    operations = g.add_subgraph(
        registry.remote_graph(workers[1], "operation_graph"))
    size, stored = _populate_storage(planning, operations, p)
    _link_storage(g, size, stored)
    return g, planning


# -- toy capacity-expansion model -------------------------------------------------


@dataclass
class CemParams:
    """Shape and seed of a generated capacity-expansion instance."""

    zones: int = 3
    weeks: int = 8
    techs: int = 3
    integer_builds: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.zones < 1 or self.weeks < 1 or self.techs < 1:
            raise ModelError("zones, weeks, and techs must all be >= 1")


@dataclass
class CemData:
    """Generated affine data for one capacity-expansion instance.

    Technology 0 is the clean baseline: zero emissions, expensive to run.
    Demand is drawn under the zone-wise capacity of a full technology-0
    build-out, so every instance is feasible by construction.
    """

    params: CemParams
    unit_cap: List[float]           # per-unit capacity, by tech
    build_ub: List[List[int]]       # max units, by zone x tech
    build_cost: List[List[float]]   # cost per unit built, by zone x tech
    gen_cost: List[float]           # cost per unit generated, by tech
    emissions: List[float]          # emissions per unit generated, by tech
    fleet_cap: List[float]          # total generation cap, by tech
    demand: List[List[float]]       # demand, by week x zone
    policy_cap: float               # total emissions budget (all weeks)
    seed_used: int = 0


def generate_cem_data(params: Optional[CemParams] = None) -> CemData:
    """Draw a random feasible instance for the given shape and seed.

    Feasibility is checked analytically (full clean build-out covers every
    zone's demand within the clean fleet cap); a failing draw regenerates
    with the next seed and warns.
    """
    p = params or CemParams()
    Z, W, K = p.zones, p.weeks, p.techs
    seed = p.seed
    for _ in range(10):
        rng = np.random.default_rng(seed)
        unit_cap = rng.uniform(5.0, 10.0, size=K)
        build_ub = rng.integers(2, 5, size=(Z, K))
        build_cost = rng.uniform(50.0, 150.0, size=(Z, K))
        gen_cost = np.concatenate([rng.uniform(8.0, 15.0, size=1),
                                   rng.uniform(1.0, 6.0, size=max(K - 1, 0))])
        emissions = np.concatenate([np.zeros(1),
                                    rng.uniform(0.5, 2.0, size=max(K - 1, 0))])
        clean_cap = unit_cap[0] * build_ub[:, 0]          # per-zone clean cap
        demand = rng.uniform(0.3, 0.8, size=(W, Z)) * clean_cap[None, :]
        fleet_cap = np.empty(K)
        fleet_cap[0] = float(np.sum(clean_cap))
        if K > 1:
            fleet_cap[1:] = rng.uniform(0.4, 0.8, size=K - 1) * np.array(
                [float(np.sum(unit_cap[k] * build_ub[:, k]))
                 for k in range(1, K)])
        mean_emis = float(np.mean(emissions[1:])) if K > 1 else 1.0
        policy_cap = 0.4 * float(np.sum(demand)) * mean_emis

        zone_ok = bool(np.all(demand <= clean_cap[None, :]))
        fleet_ok = bool(np.all(demand.sum(axis=1) <= fleet_cap[0]))
        if zone_ok and fleet_ok:
            return CemData(
                params=p,
                unit_cap=[float(v) for v in unit_cap],
                build_ub=[[int(v) for v in row] for row in build_ub],
                build_cost=[[float(v) for v in row] for row in build_cost],
                gen_cost=[float(v) for v in gen_cost],
                emissions=[float(v) for v in emissions],
                fleet_cap=[float(v) for v in fleet_cap],
                demand=[[float(v) for v in row] for row in demand],
                policy_cap=float(policy_cap),
                seed_used=seed,
            )
        warnings.warn(
            f"generated instance for seed {seed} is infeasible; retrying "
            f"with seed {seed + 1}")
        seed += 1
    raise ModelError("could not generate a feasible instance in 10 attempts")


def _populate_cem_planning(node, data: CemData):
    """Planning node: builds, policy allocations, and value variables."""
    p = data.params
    builds: Dict[Tuple[int, int], object] = {}
    kind = INTEGER if p.integer_builds else CONTINUOUS
    for z in range(p.zones):
        for k in range(p.techs):
            builds[(z, k)] = node.add_variable(
                "vBUILD", VariableBounds(0.0, float(data.build_ub[z][k]),
                                         kind), (z, k))
    policies = [node.add_variable("vPOLICY",
                                  VariableBounds(0.0, data.policy_cap), (w,))
                for w in range(p.weeks)]
    thetas = [node.add_variable("vTHETA", VariableBounds(0.0, math.inf), (w,))
              for w in range(p.weeks)]
    total_policy = sum((1.0 * q for q in policies), start=0.0)
    node.add_constraint(total_policy <= data.policy_cap)
    objective = sum(
        (data.build_cost[z][k] * builds[(z, k)]
         for z in range(p.zones) for k in range(p.techs)),
        start=0.0)
    objective = objective + sum((1.0 * th for th in thetas), start=0.0)
    node.set_objective(objective)
    return builds, policies, thetas


def _populate_cem_week(node, w: int, data: CemData):
    """One week's node: generation, local copies, and operating rows."""
    p = data.params
    gens: Dict[Tuple[int, int], object] = {}
    copies: Dict[Tuple[int, int], object] = {}
    for z in range(p.zones):
        for k in range(p.techs):
            gens[(z, k)] = node.add_variable(
                "vGEN", VariableBounds(
                    0.0, data.unit_cap[k] * data.build_ub[z][k]), (z, k))
    for z in range(p.zones):
        for k in range(p.techs):
            copies[(z, k)] = node.add_variable(
                "vBUILD", VariableBounds(0.0, float(data.build_ub[z][k])),
                (z, k))
    policy_copy = node.add_variable(
        "vPOLICY", VariableBounds(0.0, data.policy_cap), (w,))
    for z in range(p.zones):
        served = sum((1.0 * gens[(z, k)] for k in range(p.techs)), start=0.0)
        node.add_constraint(served >= data.demand[w][z])
    for z in range(p.zones):
        for k in range(p.techs):
            node.add_constraint(
                (gens[(z, k)] - data.unit_cap[k] * copies[(z, k)]) <= 0.0)
    emitted = sum((data.emissions[k] * gens[(z, k)]
                   for z in range(p.zones) for k in range(p.techs)),
                  start=0.0)
    node.add_constraint((emitted - policy_copy) <= 0.0)
    for k in range(p.techs):
        fleet = sum((1.0 * gens[(z, k)] for z in range(p.zones)), start=0.0)
        node.add_constraint(fleet <= data.fleet_cap[k])
    node.set_objective(sum(
        (data.gen_cost[k] * gens[(z, k)]
         for z in range(p.zones) for k in range(p.techs)),
        start=0.0))
    return copies, policy_copy


def _link_cem_week(g, builds, policies, copies, policy_copy, w: int,
                   zones: int, techs: int) -> None:
    for z in range(zones):
        for k in range(techs):
            g.add_link_constraint(copies[(z, k)].eq(builds[(z, k)]))
    g.add_link_constraint(policy_copy.eq(policies[w]))


def build_toy_cem_local(data: CemData) -> Tuple[OptiGraph, OptiGraph]:
    """Build the capacity-expansion star locally; returns (graph, planning)."""
    p = data.params
    g = OptiGraph("cem")
    planning = g.add_subgraph(OptiGraph("planning_graph"))
    pnode = planning.add_node("planning_node")
    builds, policies, _ = _populate_cem_planning(pnode, data)
    for w in range(p.weeks):
        week = g.add_subgraph(OptiGraph(f"operation_graph{w}"))
        wnode = week.add_node(f"operation_node{w}")
        copies, policy_copy = _populate_cem_week(wnode, w, data)
        _link_cem_week(g, builds, policies, copies, policy_copy, w,
                       p.zones, p.techs)
    return g, planning


def build_toy_cem_remote(registry, data: CemData,
                         workers: Optional[Sequence[int]] = None):
    """Build the capacity-expansion star across workers.

    The planning graph goes on the first worker; week subproblems are
    built with one batched program each and assigned round-robin over
    ``workers`` (defaults: every non-coordinator worker, else worker 1).
    Returns (remote graph, planning remote subgraph).
    """
    from .remote.rgraph import BuildProgram

    p = data.params
    if workers is None:
        workers = [w for w in registry.worker_ids if w != 1] or [1]
    g = registry.remote_graph(1, "cem")
    planning = g.add_subgraph(
        registry.remote_graph(workers[0], "planning_graph"))
    pnode = planning.add_node("planning_node")
    builds, policies, _ = _populate_cem_planning(pnode, data)
    for w in range(p.weeks):
        week = g.add_subgraph(registry.remote_graph(
            workers[w % len(workers)], f"operation_graph{w}"))
        program = BuildProgram()
        wnode = program.add_node(f"operation_node{w}")
        _populate_cem_week(wnode, w, data)
        for z in range(p.zones):
            for k in range(p.techs):
                wnode.variable("vBUILD", (z, k))
        wnode.variable("vPOLICY", (w,))
        fetched = week.execute(program)
        copies = {(z, k): fetched[z * p.techs + k]
                  for z in range(p.zones) for k in range(p.techs)}
        policy_copy = fetched[-1]
        _link_cem_week(g, builds, policies, copies, policy_copy, w,
                       p.zones, p.techs)
    return g, planning
