"""Decomposition solve over a master graph and dual-cut subproblems.

The input graph must be a star: one designated root subgraph (the master)
plus any number of sibling subgraphs (the subproblems), where every linking
edge connects the root to exactly one subproblem. Each iteration solves the
master (root variables, one value variable per subproblem, accumulated
cuts), fixes every subproblem's linking copies to the master solution
through equality rows, and turns those rows' duals into new cuts.

Works identically on local OptiGraphs and on RemoteOptiGraphs, where
subproblem evaluations run concurrently across distinct workers.
"""

from __future__ import annotations

import csv
import math
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .expr import (
    GE,
    AffineExpr,
    Constraint,
    ModelError,
    VariableBounds,
    VariableId,
    split_canonical_name,
)
from .graph import OptiGraph, StandardFormProblem
from .remote.rgraph import RemoteOptiGraph
from .solve import SolverConfig, solve_problem
from .subproblem import EvalResult, LinkRow, build_sub_template

__all__ = [
    "BendersConfig",
    "BendersState",
    "Cut",
    "cut_validity_check",
    "map_linking_variables",
    "run_benders",
    "validate_structure",
]

_THETA = "vTHETA"


@dataclass
class BendersConfig:
    """Termination and recourse settings for a decomposition run."""

    rel_gap: float = 1e-3
    max_iterations: int = 200
    add_slacks: bool = True
    slack_penalty: float = 1e6
    theta_lower: float = 0.0

    def __post_init__(self):
        if not self.rel_gap > 0:
            raise ModelError(f"rel_gap must be > 0, got {self.rel_gap}")
        if not self.slack_penalty > 0:
            raise ModelError(
                f"slack_penalty must be > 0, got {self.slack_penalty}")
        if self.max_iterations < 1:
            raise ModelError(
                f"max_iterations must be >= 1, got {self.max_iterations}")


@dataclass
class Cut:
    """One optimality cut: theta_sub >= intercept + coefficients · x.

    ``point``/``value`` record where the cut was generated and the
    subproblem value there (the cut is tight at its generation point).
    """

    sub: str
    theta: VariableId
    intercept: float
    coefficients: Dict[VariableId, float]
    point: Dict[VariableId, float]
    value: float
    iteration: int

    def evaluate(self, assignment: Dict[VariableId, float]) -> float:
        return self.intercept + sum(
            coef * assignment[vid] for vid, coef in self.coefficients.items())


class _SubHandle:
    """One subproblem: its master interface and an evaluation callable."""

    def __init__(self, sub_id: str, master_vids: List[VariableId],
                 evaluate: Callable[[Sequence[float]], EvalResult],
                 value_lower_bound: float, concurrent: bool):
        self.sub_id = sub_id
        self.master_vids = master_vids
        self.evaluate = evaluate
        self.value_lower_bound = value_lower_bound
        self.concurrent = concurrent
        self.theta: Optional[VariableId] = None


class BendersState:
    """Bound histories, cut pool, and incumbent of a decomposition run."""

    def __init__(self):
        self.status = "running"
        self.iterations = 0
        self.objective = math.inf
        self.lower_bounds: List[float] = []
        self.upper_bounds: List[float] = []
        self.gaps: List[float] = []
        self.wall_seconds: List[float] = []
        self.cuts: List[Cut] = []
        self.incumbent: Dict[VariableId, float] = {}
        self.final_slack_activity = 0.0
        self._subs: List[_SubHandle] = []
        self._linking_bounds: Dict[VariableId, Tuple[float, float]] = {}

    @property
    def rel_gap(self) -> float:
        return self.gaps[-1] if self.gaps else math.inf

    def write_trace(self, path: str) -> None:
        """Write the per-iteration convergence trace as CSV."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "wall_seconds", "lower_bound",
                             "upper_bound", "rel_gap"])
            for i in range(len(self.lower_bounds)):
                writer.writerow([
                    i + 1,
                    f"{self.wall_seconds[i]:.6f}",
                    repr(self.lower_bounds[i]),
                    repr(self.upper_bounds[i]),
                    repr(self.gaps[i]),
                ])


# -- structure checks ---------------------------------------------------------


def validate_structure(g, root) -> None:
    """Check the master/subproblem star shape required for decomposition.

    Every linking edge at ``g``'s own level must connect the root subgraph
    to exactly one other subgraph, and subproblems must be continuous
    (duals are needed); errors name the offending edge or subgraph.
    """
    if isinstance(g, RemoteOptiGraph):
        return _validate_remote(g, root)
    return _validate_local(g, root)


def _validate_local(g: OptiGraph, root: OptiGraph) -> None:
    if root not in g.subgraphs:
        raise ModelError("root must be a direct subgraph of the solve graph")
    child_of: Dict[str, OptiGraph] = {}
    for child in g.subgraphs:
        for node in child.all_nodes():
            child_of[node.id] = child
    for sub in g.subgraphs:
        if sub is root:
            continue
        if sub.flatten().has_integer_variables():
            raise ModelError(
                f"subproblem {_graph_id(g, sub)} has integer variables; "
                "only the master may be integer")
    for edge in g.edges:
        children = set()
        for node_id in edge.incident_nodes:
            child = child_of.get(node_id)
            if child is None:
                raise ModelError(
                    f"edge {edge.id} touches the solve graph's own nodes; "
                    "linking edges must connect the root to one subgraph")
            children.add(child)
        if len(children) != 2 or root not in children:
            names = sorted(_graph_id(g, c) for c in children)
            raise ModelError(
                f"edge {edge.id} connects {names}; every linking edge must "
                "connect the root to exactly one other subgraph")


def _validate_remote(g: RemoteOptiGraph, root: RemoteOptiGraph) -> None:
    if root not in g.subgraphs:
        raise ModelError("root must be a direct subgraph of the solve graph")
    child_of: Dict[str, RemoteOptiGraph] = {}
    for child in g.subgraphs:
        for desc in child.all_graphs():
            child_of[desc.id] = child
    for sub in g.subgraphs:
        if sub is root:
            continue
        if sub.subgraphs:
            raise ModelError(
                f"subproblem {_graph_id(g, sub)} has nested subgraphs; "
                "remote subproblems must each live on a single worker graph")
        if sub.stats()["has_integer"]:
            raise ModelError(
                f"subproblem {_graph_id(g, sub)} has integer variables; "
                "only the master may be integer")
    for edge in g.interworker_edges:
        children = set()
        for graph_id, _ in edge.endpoints:
            child = child_of.get(graph_id)
            if child is None:
                raise ModelError(
                    f"edge {edge.id} touches the solve graph's own nodes; "
                    "linking edges must connect the root to one subgraph")
            children.add(child)
        if len(children) != 2 or root not in children:
            names = sorted(_graph_id(g, c) for c in children)
            raise ModelError(
                f"edge {edge.id} connects {names}; every linking edge must "
                "connect the root to exactly one other subgraph")


def _graph_id(g, sub) -> str:
    if getattr(sub, "name", ""):
        return sub.name
    for i, child in enumerate(g.subgraphs):
        if child is sub:
            return f"subgraph {i}"
    return "subgraph"


# -- linking-variable maps ------------------------------------------------------


def map_linking_variables(root, sub) -> Dict[VariableId, VariableId]:
    """Pair subproblem variables with master variables by name suffix.

    Two variables match when their canonical names agree from ``[:`` on
    (same variable name and subscripts, any node label). The returned map
    is subproblem variable → master variable and must cover every
    subproblem-side variable that appears in a root↔sub linking constraint.
    """
    master_vars = _all_variable_ids(root)
    sub_vars = _all_variable_ids(sub)
    master_by_suffix: Dict[str, VariableId] = {}
    duplicates = set()
    for vid in master_vars:
        suffix = split_canonical_name(vid.name)[1]
        if suffix in master_by_suffix:
            duplicates.add(suffix)
        master_by_suffix[suffix] = vid
    mapping: Dict[VariableId, VariableId] = {}
    matched_suffixes: Dict[str, VariableId] = {}
    for vid in sub_vars:
        suffix = split_canonical_name(vid.name)[1]
        master = master_by_suffix.get(suffix)
        if master is None:
            continue
        if suffix in duplicates:
            raise ModelError(
                f"ambiguous match for {vid.name!r}: several master "
                f"variables share the suffix {suffix!r}")
        if suffix in matched_suffixes:
            raise ModelError(
                f"ambiguous match for suffix {suffix!r}: both "
                f"{matched_suffixes[suffix].name!r} and {vid.name!r} "
                "match the same master variable")
        matched_suffixes[suffix] = vid
        mapping[vid] = master
    sub_node_ids = _node_id_set(sub)
    for con in _linking_constraints(root, sub):
        for vid in con.body.terms:
            if vid.node in sub_node_ids and vid not in mapping:
                raise ModelError(
                    f"linking constraint variable {vid.name!r} has no "
                    "master counterpart")
    return mapping


def _all_variable_ids(g) -> List[VariableId]:
    if isinstance(g, RemoteOptiGraph):
        g = g.collect()
    return [vid for node in g.all_nodes() for vid in node.variable_ids]


def _node_id_set(g) -> set:
    if isinstance(g, RemoteOptiGraph):
        g = g.collect()
    return {node.id for node in g.all_nodes()}


def _linking_constraints(root, sub) -> List[Constraint]:
    """Constraints on root's parent whose edges touch both root and sub."""
    parent = root.parent
    if parent is None or sub.parent is not parent:
        return []
    cons: List[Constraint] = []
    if isinstance(root, RemoteOptiGraph):
        root_ids = {d.id for d in root.all_graphs()}
        sub_ids = {d.id for d in sub.all_graphs()}
        for edge in parent.interworker_edges:
            touched = {gid for gid, _ in edge.endpoints}
            if touched & root_ids and touched & sub_ids:
                cons.extend(edge.link_constraints)
        return cons
    root_nodes = {n.id for n in root.all_nodes()}
    sub_nodes = {n.id for n in sub.all_nodes()}
    for edge in parent.edges:
        if edge.incident_nodes & root_nodes and edge.incident_nodes & sub_nodes:
            cons.extend(edge.link_constraints)
    return cons


# -- master/sub assembly --------------------------------------------------------


def _master_key(vid: VariableId) -> str:
    return f"{vid.node}:{vid.index}"


def _split_link_constraint(con: Constraint, root_node_ids: set
                           ) -> Tuple[LinkRow, List[VariableId]]:
    """Rewrite master variables in a link row as string keys."""
    terms: Dict[Any, float] = {}
    master_vids: List[VariableId] = []
    for vid, coef in con.body.terms.items():
        if vid.node in root_node_ids:
            terms[_master_key(vid)] = terms.get(_master_key(vid), 0.0) + coef
            master_vids.append(vid)
        else:
            terms[vid] = terms.get(vid, 0.0) + coef
    return (LinkRow(terms, con.sense, con.rhs - con.body.constant),
            master_vids)


def _build_local_subs(g: OptiGraph, root: OptiGraph, cfg: BendersConfig,
                      solver: SolverConfig
                      ) -> Tuple[StandardFormProblem, List[_SubHandle]]:
    master = root.flatten()
    root_node_ids = {n.id for n in root.all_nodes()}
    subs = [sg for sg in g.subgraphs if sg is not root]
    node_to_sub: Dict[str, int] = {}
    for i, sub in enumerate(subs):
        for node in sub.all_nodes():
            node_to_sub[node.id] = i
    links: List[List[Tuple[LinkRow, List[VariableId]]]] = [[] for _ in subs]
    for edge in g.edges:
        target = next(node_to_sub[nid] for nid in edge.incident_nodes
                      if nid in node_to_sub)
        for con in edge.link_constraints:
            links[target].append(_split_link_constraint(con, root_node_ids))
    handles = []
    for i, sub in enumerate(subs):
        master_vids = _ordered_master_vids(links[i])
        keys = [_master_key(v) for v in master_vids]
        bounds = {_master_key(v): (master.bounds[v].lower,
                                   master.bounds[v].upper)
                  for v in master_vids}
        template = build_sub_template(
            sub.flatten(), [row for row, _ in links[i]], keys, bounds,
            cfg.slack_penalty, cfg.add_slacks)
        handles.append(_SubHandle(
            _graph_id(g, sub), master_vids,
            lambda xhat, _t=template: _t.evaluate(xhat, solver),
            template.value_lower_bound, concurrent=False))
    return master, handles


def _ordered_master_vids(
        sub_links: List[Tuple[LinkRow, List[VariableId]]]) -> List[VariableId]:
    seen: Dict[VariableId, None] = {}
    for _, vids in sub_links:
        for vid in vids:
            seen[vid] = None
    return sorted(seen, key=lambda v: (v.name, v.node, v.index))


def _build_remote_subs(g: RemoteOptiGraph, root: RemoteOptiGraph,
                       cfg: BendersConfig, solver: SolverConfig
                       ) -> Tuple[StandardFormProblem, List[_SubHandle]]:
    collected_root = root.collect()
    master = collected_root.flatten()
    root_node_ids = {n.id for n in collected_root.all_nodes()}
    subs = [sg for sg in g.subgraphs if sg is not root]
    sub_index = {sub.id: i for i, sub in enumerate(subs)}
    links: List[List[Tuple[LinkRow, List[VariableId]]]] = [[] for _ in subs]
    for edge in g.interworker_edges:
        target = next(sub_index[gid] for gid, _ in edge.endpoints
                      if gid in sub_index)
        for con in edge.link_constraints:
            links[target].append(_split_link_constraint(con, root_node_ids))
    solver_wire = {
        "feas_tol": solver.feas_tol,
        "pivot_tol": solver.pivot_tol,
        "max_iterations": solver.max_iterations,
        "mip_gap": solver.mip_gap,
    }
    handles = []
    for i, sub in enumerate(subs):
        master_vids = _ordered_master_vids(links[i])
        keys = [_master_key(v) for v in master_vids]
        wire_links = [_link_row_to_wire(row) for row, _ in links[i]]
        body = sub._request("benders_prepare", {
            "links": wire_links,
            "master_keys": keys,
            "master_bounds": [
                [_master_key(v), master.bounds[v].lower,
                 master.bounds[v].upper] for v in master_vids],
            "penalty": cfg.slack_penalty,
            "add_slacks": cfg.add_slacks,
        })
        eval_id = body["eval"]

        def evaluate(xhat, _sub=sub, _eval=eval_id):
            reply = _sub._request("benders_eval", {
                "eval": _eval,
                "xhat": [float(v) for v in xhat],
                "solver": solver_wire,
            })
            return EvalResult(str(reply["status"]), float(reply["value"]),
                              [float(d) for d in reply["duals"]],
                              float(reply["slack"]), int(reply["iterations"]))

        handles.append(_SubHandle(
            _graph_id(g, sub), master_vids, evaluate,
            float(body["theta_lb"]), concurrent=True))
    return master, handles


def _link_row_to_wire(row: LinkRow) -> Dict[str, Any]:
    master = sorted((k for k in row.terms if isinstance(k, str)))
    locals_ = sorted((k for k in row.terms if not isinstance(k, str)),
                     key=lambda v: (v.name, v.node, v.index))
    terms = [[["m", k], row.terms[k]] for k in master]
    terms += [[["vid", v.node, v.index, v.name], row.terms[v]]
              for v in locals_]
    return {"terms": terms, "sense": row.sense, "rhs": row.rhs}


# -- the value variables ---------------------------------------------------------


def _subscript_key(name: str) -> Tuple[int, ...]:
    suffix = split_canonical_name(name)[1]
    end = suffix.find("]")
    tail = suffix[end + 1:]
    if not tail:
        return ()
    return tuple(int(s) for s in tail[1:-1].split(","))


def _attach_thetas(master: StandardFormProblem, handles: List[_SubHandle],
                   cfg: BendersConfig) -> None:
    """Bind one value variable per subproblem, creating them if absent.

    Pre-created value variables are recognized by the variable name
    ``vTHETA`` (they must carry unit objective coefficients, as the worked
    models do). Created ones get objective coefficient 1 and a lower bound
    no tighter than each subproblem's interval objective bound.
    """
    present = [vid for vid in master.variable_order
               if split_canonical_name(vid.name)[1][2:].split("]")[0] == _THETA]
    if present:
        if len(present) != len(handles):
            raise ModelError(
                f"found {len(present)} {_THETA} variables for "
                f"{len(handles)} subproblems")
        present.sort(key=lambda v: _subscript_key(v.name))
        for handle, vid in zip(handles, present):
            handle.theta = vid
        return
    objective = master.objective
    for i, handle in enumerate(handles):
        vid = VariableId("@theta", i, f"@theta[{i}]")
        lower = cfg.theta_lower
        if math.isfinite(handle.value_lower_bound):
            lower = min(lower, handle.value_lower_bound)
        master.variable_order.append(vid)
        master.bounds[vid] = VariableBounds(lower, math.inf)
        objective = objective + AffineExpr({vid: 1.0})
        handle.theta = vid
    master.objective = objective


# -- the loop -------------------------------------------------------------------


def _evaluate_all(handles: List[_SubHandle],
                  xhats: List[List[float]]) -> List[EvalResult]:
    if len(handles) <= 1 or not handles[0].concurrent:
        return [h.evaluate(x) for h, x in zip(handles, xhats)]
    results: List[Optional[EvalResult]] = [None] * len(handles)
    errors: List[BaseException] = []

    def call(i: int) -> None:
        try:
            results[i] = handles[i].evaluate(xhats[i])
        except BaseException as exc:  # re-raised on the coordinator thread
            errors.append(exc)

    threads = [threading.Thread(target=call, args=(i,))
               for i in range(len(handles))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return results  # type: ignore[return-value]


def run_benders(g, root, cfg: Optional[BendersConfig] = None,
                solver_cfg: Optional[SolverConfig] = None) -> BendersState:
    """Decompose ``g`` around ``root`` and iterate cuts to the target gap.

    ``g`` may be an OptiGraph or a RemoteOptiGraph; ``root`` must be one of
    its direct subgraphs. Returns the bound histories, cut pool, and
    incumbent; raises ModelError for structural problems, an infeasible
    master, or a subproblem that fails with recourse slacks disabled.

    The default solver configuration ties the master's MIP gap to the
    target gap (two orders tighter, floored at 1e-10); reported lower
    bounds always come from the master's proven bound, so they stay valid
    and monotone even when branch-and-bound stops at its relative gap.
    """
    cfg = cfg or BendersConfig()
    solver = solver_cfg or SolverConfig(
        mip_gap=max(1e-10, min(1e-6, 1e-2 * cfg.rel_gap)))
    validate_structure(g, root)
    if isinstance(g, RemoteOptiGraph):
        master, handles = _build_remote_subs(g, root, cfg, solver)
    else:
        master, handles = _build_local_subs(g, root, cfg, solver)
    master = master.copy()
    _attach_thetas(master, handles, cfg)

    state = BendersState()
    state._subs = handles
    for handle in handles:
        for vid in handle.master_vids:
            b = master.bounds[vid]
            state._linking_bounds[vid] = (b.lower, b.upper)

    start = time.perf_counter()
    best_ub = math.inf
    for iteration in range(1, cfg.max_iterations + 1):
        res = solve_problem(master, solver)
        if res.status != "optimal":
            raise ModelError(
                f"master problem {res.status} at iteration {iteration}")
        proven = res.bound if res.bound is not None else res.objective
        lower = max(state.lower_bounds[-1], proven) \
            if state.lower_bounds else proven
        theta_hat = [res.primal[h.theta] for h in handles]
        xhats = [[res.primal[vid] for vid in h.master_vids] for h in handles]
        evals = _evaluate_all(handles, xhats)
        for handle, ev in zip(handles, evals):
            if ev.status != "optimal":
                hint = ("" if cfg.add_slacks else
                        "; enable add_slacks for recourse")
                raise ModelError(
                    f"subproblem {handle.sub_id} {ev.status} at iteration "
                    f"{iteration}{hint}")
        candidate = (res.objective - sum(theta_hat)) \
            + sum(ev.value for ev in evals)
        if candidate < best_ub:
            best_ub = candidate
            state.incumbent = {
                vid: res.primal[vid] for vid in master.variable_order
                if vid.node != "@theta"}
        state.final_slack_activity = sum(ev.slack_activity for ev in evals)
        gap = (best_ub - lower) / max(abs(best_ub), 1.0)
        state.iterations = iteration
        state.lower_bounds.append(lower)
        state.upper_bounds.append(best_ub)
        state.gaps.append(gap)
        state.wall_seconds.append(time.perf_counter() - start)
        if gap <= cfg.rel_gap:
            state.status = "converged"
            break
        for handle, ev, xhat in zip(handles, evals, xhats):
            coefficients = dict(zip(handle.master_vids, ev.duals))
            intercept = ev.value - sum(
                d * x for d, x in zip(ev.duals, xhat))
            cut = Cut(handle.sub_id, handle.theta, intercept, coefficients,
                      dict(zip(handle.master_vids, xhat)), ev.value,
                      iteration)
            state.cuts.append(cut)
            terms = {vid: -coef for vid, coef in coefficients.items()}
            terms[handle.theta] = terms.get(handle.theta, 0.0) + 1.0
            master.rows.append(Constraint(AffineExpr(terms), GE, intercept))
            master.row_provenance.append(
                ("cut", f"{handle.sub_id}@{iteration}"))
    else:
        state.status = "iteration_limit"
    state.objective = best_ub
    return state


# -- cut auditing ----------------------------------------------------------------


def cut_validity_check(state: BendersState,
                       points: Union[int, List[Dict[VariableId, float]]] = 25,
                       rng: Optional[np.random.Generator] = None,
                       tol: float = 1e-6) -> Dict[str, Any]:
    """Verify every stored cut under-estimates its subproblem everywhere.

    Samples master assignments (or takes explicit ones), re-solves each
    subproblem there, and requires cut(x) ≤ value(x) + tol·(1+|value(x)|).
    Raises ModelError naming the violated cut and point; returns a summary
    report otherwise.
    """
    if isinstance(points, int):
        rng = rng or np.random.default_rng(0)
        sampled = []
        for _ in range(points):
            assignment = {}
            for vid, (lo, hi) in state._linking_bounds.items():
                lo = lo if math.isfinite(lo) else -1e3
                hi = hi if math.isfinite(hi) else 1e3
                assignment[vid] = float(rng.uniform(lo, hi))
            sampled.append(assignment)
        points = sampled
    checked = 0
    max_excess = -math.inf
    for assignment in points:
        for handle in state._subs:
            cuts = [c for c in state.cuts if c.sub == handle.sub_id]
            if not cuts:
                continue
            xhat = [assignment[vid] for vid in handle.master_vids]
            ev = handle.evaluate(xhat)
            if ev.status != "optimal":
                continue
            for cut in cuts:
                val = cut.evaluate(assignment)
                excess = val - ev.value
                max_excess = max(max_excess, excess)
                checked += 1
                if excess > tol * (1.0 + abs(ev.value)):
                    raise ModelError(
                        f"cut for {cut.sub} (iteration {cut.iteration}) "
                        f"overestimates at {xhat}: cut={val!r}, "
                        f"value={ev.value!r}")
    return {"points": len(points), "cuts_checked": checked,
            "max_excess": max_excess}
