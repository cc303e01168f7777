"""Whole-graph payload encoding for fetching worker-resident graphs.

The payload preserves node ids, variable order, and creation specs, so a
rebuilt graph has byte-identical canonical names and VariableIds to the
original — constraints captured coordinator-side (e.g. inter-worker links)
resolve against the rebuilt graph without translation.
"""

from __future__ import annotations

from typing import Any, Dict

from ..expr import AffineExpr, Constraint, VariableBounds
from ..graph import OptiGraph, OptiNode
from .wire import terms_from_wire, terms_to_wire

__all__ = ["constraint_to_wire", "constraint_from_wire",
           "graph_to_payload", "graph_from_payload"]


def constraint_to_wire(con: Constraint) -> Dict[str, Any]:
    return {"terms": terms_to_wire(con.body.terms), "sense": con.sense,
            "rhs": con.rhs, "constant": con.body.constant}


def constraint_from_wire(data: Dict[str, Any]) -> Constraint:
    body = AffineExpr(terms_from_wire(data["terms"]),
                      float(data.get("constant", 0.0)))
    return Constraint(body, str(data["sense"]), float(data["rhs"]))


def _node_to_payload(node: OptiNode) -> Dict[str, Any]:
    variables = []
    for index, (vid, bounds) in enumerate(node.variables):
        var_name, subs = node.variable_spec(index)
        variables.append({
            "name": var_name,
            "subs": list(subs),
            "lb": bounds.lower,
            "ub": bounds.upper,
            "kind": bounds.integrality,
        })
    payload = {
        "id": node.id,
        "label": node.label,
        "variables": variables,
        "constraints": [constraint_to_wire(c) for c in node.constraints],
    }
    if node.objective.terms or node.objective.constant:
        payload["objective"] = {
            "terms": terms_to_wire(node.objective.terms),
            "constant": node.objective.constant,
        }
    return payload


def graph_to_payload(g: OptiGraph) -> Dict[str, Any]:
    return {
        "name": g.name,
        "nodes": [_node_to_payload(n) for n in g.nodes],
        "edges": [
            {"nodes": sorted(e.incident_nodes),
             "constraints": [constraint_to_wire(c) for c in e.link_constraints]}
            for e in g.edges
        ],
        "subgraphs": [graph_to_payload(child) for child in g.subgraphs],
    }


def graph_from_payload(payload: Dict[str, Any]) -> OptiGraph:
    g = OptiGraph(str(payload.get("name", "")))
    for node_data in payload["nodes"]:
        node = g.add_node(str(node_data["label"]), _node_id=str(node_data["id"]))
        for var in node_data["variables"]:
            node.add_variable(
                str(var["name"]),
                VariableBounds(float(var["lb"]), float(var["ub"]),
                               str(var["kind"])),
                tuple(int(s) for s in var["subs"]))
        for con in node_data["constraints"]:
            node.add_constraint(constraint_from_wire(con))
        if "objective" in node_data:
            obj = node_data["objective"]
            node.set_objective(AffineExpr(terms_from_wire(obj["terms"]),
                                          float(obj["constant"])))
    for child_payload in payload.get("subgraphs", []):
        g.add_subgraph(graph_from_payload(child_payload))
    for edge_data in payload.get("edges", []):
        for con in edge_data["constraints"]:
            g.add_link_constraint(constraint_from_wire(con))
    return g
