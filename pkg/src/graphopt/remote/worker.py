"""Worker runtime: a graph store driven by a single-threaded message loop.

A worker owns OptiGraphs keyed by opaque handles and executes one request at
a time: graph construction ops, batched build programs (applied atomically
with snapshot/rollback), whole-graph dumps, and parametric subproblem
preparation/evaluation for decomposition runs. Validation errors are
reported back verbatim in error replies; they never kill the loop.
"""

from __future__ import annotations

import copy as _copy
from typing import Any, Dict, List, Optional, Tuple

from ..expr import (
    CONTINUOUS,
    SENSES,
    AffineExpr,
    Constraint,
    ModelError,
    VariableBounds,
    VariableId,
)
from ..graph import OptiGraph, OptiNode
from ..solve.lp import SolverConfig
from ..subproblem import LinkRow, build_sub_template
from .refs import ProxyVariableRef, proxy_from_wire
from .serde import constraint_from_wire, graph_to_payload
from .wire import Message, decode_message, encode_message, terms_from_wire

__all__ = ["Worker"]


class Worker:
    """Graph store plus request dispatcher (transport-agnostic)."""

    def __init__(self):
        self._graphs: Dict[str, OptiGraph] = {}
        self._templates: Dict[str, Any] = {}
        self._counter = 0
        self.stopping = False

    # -- plumbing ---------------------------------------------------------

    def handle_payload(self, payload: bytes) -> bytes:
        """Process one request payload, returning the response payload."""
        msg = decode_message(payload)
        try:
            handler = getattr(self, f"_op_{msg.kind}", None)
            if handler is None:
                raise ModelError(f"unknown operation {msg.kind!r}")
            body = handler(msg)
            return encode_message(msg.request_id, "ok", msg.graph_handle,
                                  body or {})
        except Exception as exc:  # relay validation errors verbatim
            body = {"message": str(exc), "error_type": type(exc).__name__}
            if isinstance(exc, _ProgramError):
                body["instruction"] = exc.instruction
            return encode_message(msg.request_id, "error", msg.graph_handle, body)

    def _graph(self, msg: Message) -> OptiGraph:
        g = self._graphs.get(msg.graph_handle)
        if g is None:
            raise ModelError(f"unknown graph handle {msg.graph_handle!r}")
        return g

    def _node(self, g: OptiGraph, node_id: str) -> OptiNode:
        node = g.find_node(str(node_id))
        if node is None:
            raise ModelError(
                f"unresolvable node reference {node_id!r}: no such node on this "
                "graph (variables on other workers can only be linked through "
                "an inter-worker link constraint)")
        return node

    def _resolve_variable(self, g: OptiGraph, ref) -> Tuple[OptiNode, VariableId,
                                                            VariableBounds]:
        proxy = proxy_from_wire(ref) if isinstance(ref, list) else ref
        if not isinstance(proxy, ProxyVariableRef):
            raise ModelError(f"expected a variable reference, got {proxy!r}")
        node = self._node(g, proxy.node_id)
        vid, bounds = node.variable_by_index(proxy.index)
        if vid.name != proxy.name:
            raise ModelError(
                f"unresolvable proxy: index {proxy.index} on node "
                f"{node.label!r} is {vid.name!r}, not {proxy.name!r}")
        return node, vid, bounds

    def _constraint_terms(self, g: OptiGraph, terms_wire) -> Dict[VariableId, float]:
        terms = terms_from_wire(terms_wire)
        for vid in terms:
            if g.find_node(vid.node) is None:
                raise ModelError(
                    f"constraint references {vid.name!r}, which lives on a "
                    "different graph/worker; use an inter-worker link "
                    "constraint instead")
        return terms

    # -- basic ops --------------------------------------------------------

    def _op_ping(self, msg: Message) -> Dict[str, Any]:
        return {"ok": True}

    def _op_shutdown(self, msg: Message) -> Dict[str, Any]:
        self.stopping = True
        return {}

    def _op_new_graph(self, msg: Message) -> Dict[str, Any]:
        self._counter += 1
        handle = f"g{self._counter}"
        self._graphs[handle] = OptiGraph(str(msg.body.get("name", "")))
        return {"handle": handle}

    def _op_graph_stats(self, msg: Message) -> Dict[str, Any]:
        g = self._graph(msg)
        p = g.flatten()
        return {
            "nodes": len(g.all_nodes()),
            "edges": len(g.all_edges()),
            "variables": p.n_variables,
            "rows": p.n_rows,
            "has_integer": p.has_integer_variables(),
        }

    def _op_add_node(self, msg: Message) -> Dict[str, Any]:
        node = self._graph(msg).add_node(str(msg.body["label"]))
        return {"node": [node.id, node.label]}

    def _op_add_variable(self, msg: Message) -> Dict[str, Any]:
        g = self._graph(msg)
        node = self._node(g, msg.body["node"])
        vid = node.add_variable(str(msg.body["name"]), _bounds_from_wire(msg.body),
                                tuple(int(s) for s in msg.body.get("subs", [])))
        return {"vid": [vid.node, vid.index, vid.name]}

    def _op_get_variable(self, msg: Message) -> Dict[str, Any]:
        g = self._graph(msg)
        node = self._node(g, msg.body["node"])
        vid = node.variable(str(msg.body["name"]),
                            tuple(int(s) for s in msg.body.get("subs", [])))
        return {"vid": [vid.node, vid.index, vid.name]}

    def _op_get_bounds(self, msg: Message) -> Dict[str, Any]:
        _, _, bounds = self._resolve_variable(self._graph(msg), msg.body["var"])
        return {"lb": bounds.lower, "ub": bounds.upper, "kind": bounds.integrality}

    def _op_set_lower_bound(self, msg: Message) -> Dict[str, Any]:
        node, vid, bounds = self._resolve_variable(self._graph(msg),
                                                   msg.body["var"])
        node.set_bounds(vid, VariableBounds(float(msg.body["value"]),
                                            bounds.upper, bounds.integrality))
        return {}

    def _op_add_constraint(self, msg: Message) -> Dict[str, Any]:
        g = self._graph(msg)
        node = self._node(g, msg.body["node"])
        terms = self._constraint_terms(g, msg.body["terms"])
        con = Constraint(
            AffineExpr(terms, float(msg.body.get("constant", 0.0))),
            str(msg.body["sense"]), float(msg.body["rhs"]))
        ref = node.add_constraint(con)
        return {"index": ref.index}

    def _op_set_objective(self, msg: Message) -> Dict[str, Any]:
        g = self._graph(msg)
        node = self._node(g, msg.body["node"])
        terms = self._constraint_terms(g, msg.body["terms"])
        node.set_objective(AffineExpr(terms, float(msg.body.get("constant", 0.0))))
        return {}

    def _op_add_link(self, msg: Message) -> Dict[str, Any]:
        g = self._graph(msg)
        terms = self._constraint_terms(g, msg.body["terms"])
        con = Constraint(
            AffineExpr(terms, float(msg.body.get("constant", 0.0))),
            str(msg.body["sense"]), float(msg.body["rhs"]))
        edge = g.add_link_constraint(con)
        return {"edge": edge.id}

    def _op_dump_graph(self, msg: Message) -> Dict[str, Any]:
        return {"graph": graph_to_payload(self._graph(msg))}

    # -- batched build programs --------------------------------------------

    def _op_run_program(self, msg: Message) -> Dict[str, Any]:
        g = self._graph(msg)
        instructions = msg.body.get("instructions", [])
        if not instructions:
            return {"proxies": []}
        snapshot = _copy.deepcopy(g)
        slots: List[OptiNode] = []
        fetched: List[List[Any]] = []
        try:
            for i, ins in enumerate(instructions):
                try:
                    self._run_instruction(g, ins, slots, fetched)
                except Exception as exc:
                    raise _ProgramError(i, exc) from exc
        except _ProgramError:
            self._graphs[msg.graph_handle] = snapshot
            raise
        return {"proxies": fetched}

    def _run_instruction(self, g: OptiGraph, ins, slots: List[OptiNode],
                         fetched: List[List[Any]]) -> None:
        op = ins[0]
        if op == "add_node":
            slots.append(g.add_node(str(ins[1])))
        elif op == "add_variable":
            node = self._program_node(g, slots, ins[1])
            node.add_variable(str(ins[2]), _bounds_from_wire(
                {"lb": ins[4], "ub": ins[5], "kind": ins[6]}),
                tuple(int(s) for s in ins[3]))
        elif op == "add_constraint":
            node = self._program_node(g, slots, ins[1])
            node.add_constraint(Constraint(
                AffineExpr(self._program_terms(g, slots, ins[2])),
                str(ins[3]), float(ins[4])))
        elif op == "add_link":
            g.add_link_constraint(Constraint(
                AffineExpr(self._program_terms(g, slots, ins[1])),
                str(ins[2]), float(ins[3])))
        elif op == "set_objective":
            node = self._program_node(g, slots, ins[1])
            node.set_objective(AffineExpr(
                self._program_terms(g, slots, ins[2]), float(ins[3])))
        elif op == "fetch_variable":
            node = self._program_node(g, slots, ins[1])
            vid = node.variable(str(ins[2]), tuple(int(s) for s in ins[3]))
            fetched.append(["v", vid.node, vid.index, vid.name])
        else:
            raise ModelError(f"unknown program instruction {op!r}")

    def _program_node(self, g: OptiGraph, slots: List[OptiNode], ref) -> OptiNode:
        tag, value = ref
        if tag == "slot":
            idx = int(value)
            if not 0 <= idx < len(slots):
                raise ModelError(f"program references node slot {idx} "
                                 "before it was created")
            return slots[idx]
        if tag == "id":
            return self._node(g, str(value))
        raise ModelError(f"unknown node reference tag {tag!r}")

    def _program_terms(self, g: OptiGraph, slots: List[OptiNode],
                       terms_wire) -> Dict[VariableId, float]:
        terms: Dict[VariableId, float] = {}
        for ref, coef in terms_wire:
            if ref[0] == "slot":
                node = self._program_node(g, slots, ["slot", ref[1]])
                vid, _ = node.variable_by_index(int(ref[2]))
            elif ref[0] == "vid":
                vid = VariableId(str(ref[1]), int(ref[2]), str(ref[3]))
                if g.find_node(vid.node) is None:
                    raise ModelError(
                        f"program references {vid.name!r}, which lives on a "
                        "different graph/worker; use an inter-worker link "
                        "constraint instead")
            else:
                raise ModelError(f"unknown term reference tag {ref[0]!r}")
            terms[vid] = terms.get(vid, 0.0) + float(coef)
        return terms

    # -- decomposition support ----------------------------------------------

    def _op_benders_prepare(self, msg: Message) -> Dict[str, Any]:
        g = self._graph(msg)
        body = msg.body
        keys = [str(k) for k in body["master_keys"]]
        master_bounds = {str(k): (float(lo), float(hi))
                         for k, lo, hi in body["master_bounds"]}
        links = []
        for row in body["links"]:
            terms: Dict[Any, float] = {}
            for ref, coef in row["terms"]:
                if ref[0] == "m":
                    key: Any = str(ref[1])
                else:
                    key = VariableId(str(ref[1]), int(ref[2]), str(ref[3]))
                    if g.find_node(key.node) is None:
                        raise ModelError(
                            f"link row references {key.name!r}, which is not "
                            "on this worker's graph")
                terms[key] = terms.get(key, 0.0) + float(coef)
            if row["sense"] not in SENSES:
                raise ModelError(f"unknown sense {row['sense']!r}")
            links.append(LinkRow(terms, str(row["sense"]), float(row["rhs"])))
        template = build_sub_template(
            g.flatten(), links, keys, master_bounds,
            float(body["penalty"]), bool(body["add_slacks"]))
        self._counter += 1
        eval_id = f"t{self._counter}"
        self._templates[eval_id] = template
        return {"eval": eval_id, "theta_lb": template.value_lower_bound}

    def _op_benders_eval(self, msg: Message) -> Dict[str, Any]:
        template = self._templates.get(msg.body["eval"])
        if template is None:
            raise ModelError(f"unknown evaluation template {msg.body['eval']!r}")
        cfg = _solver_cfg_from_wire(msg.body.get("solver", {}))
        res = template.evaluate([float(v) for v in msg.body["xhat"]], cfg)
        return {
            "status": res.status,
            "value": res.value,
            "duals": res.duals,
            "slack": res.slack_activity,
            "iterations": res.iterations,
        }


class _ProgramError(Exception):
    """Build-program failure at a specific instruction (graph rolled back)."""

    def __init__(self, instruction: int, cause: Exception):
        super().__init__(f"instruction {instruction}: {cause}")
        self.instruction = instruction


def _bounds_from_wire(data) -> VariableBounds:
    lb = data.get("lb")
    ub = data.get("ub")
    return VariableBounds(
        float("-inf") if lb is None else float(lb),
        float("inf") if ub is None else float(ub),
        str(data.get("kind") or CONTINUOUS))


def _solver_cfg_from_wire(data) -> SolverConfig:
    cfg = SolverConfig()
    if "feas_tol" in data:
        cfg = SolverConfig(
            feas_tol=float(data["feas_tol"]),
            pivot_tol=float(data["pivot_tol"]),
            max_iterations=int(data["max_iterations"]),
            mip_gap=float(data["mip_gap"]),
        )
    return cfg
