"""Hypergraph model: nodes holding local subproblems, hyperedges holding
linking constraints, nested subgraphs, and flattening to one standard form.

A graph owns its nodes and edges; subgraphs are owned by exactly one parent.
Edges are stored on the graph whose hierarchy contains every node they
touch, with one edge per distinct incident-node set (additional link
constraints over the same node set are appended to the existing edge).
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .expr import (
    AffineExpr,
    Constraint,
    ModelError,
    VariableBounds,
    VariableId,
    as_expr,
    canonical_name,
    _check_name_part,
)

__all__ = [
    "OptiNode",
    "OptiEdge",
    "OptiGraph",
    "ConstraintRef",
    "StandardFormProblem",
    "flatten",
    "dump_graph",
    "canonical_problem_text",
]


def _new_id() -> str:
    return uuid.uuid4().hex


@dataclass(frozen=True)
class ConstraintRef:
    """Position of a stored constraint: node/edge kind, owner id, list index."""

    owner_kind: str
    owner_id: str
    index: int


class OptiNode:
    """One node: its own variables, local constraints, and objective fragment.

    Nodes are created through :meth:`OptiGraph.add_node`; every variable,
    constraint, and objective term on a node must reference only that node's
    variables (anything spanning nodes belongs on an edge).
    """

    __slots__ = ("id", "label", "_vars", "_specs", "_index_by_name",
                 "_constraints", "_objective")

    def __init__(self, label: str, node_id: Optional[str] = None):
        _check_name_part(label, "node label")
        self.id = node_id or _new_id()
        self.label = label
        self._vars: List[Tuple[VariableId, VariableBounds]] = []
        self._specs: List[Tuple[str, Tuple[int, ...]]] = []
        self._index_by_name: Dict[str, int] = {}
        self._constraints: List[Constraint] = []
        self._objective = AffineExpr()

    def add_variable(self, var_name: str, bounds: VariableBounds,
                     subscripts: Sequence[int] = ()) -> VariableId:
        """Add a variable and return its id (dense index, canonical name).

        Args:
            var_name: base name, unique per (name, subscripts) on this node.
            bounds: box bounds plus integrality.
            subscripts: optional integer subscripts.
        """
        if not isinstance(bounds, VariableBounds):
            raise ModelError(f"bounds must be VariableBounds, got {bounds!r}")
        name = canonical_name(self.label, var_name, subscripts)
        if name in self._index_by_name:
            raise ModelError(f"variable {name} already exists")
        vid = VariableId(self.id, len(self._vars), name)
        self._index_by_name[name] = vid.index
        self._vars.append((vid, bounds))
        self._specs.append((var_name, tuple(int(s) for s in subscripts)))
        return vid

    def variable_spec(self, index: int) -> Tuple[str, Tuple[int, ...]]:
        """Return the (var_name, subscripts) the variable was created with."""
        if not 0 <= index < len(self._specs):
            raise ModelError(f"node {self.label} has no variable index {index}")
        return self._specs[index]

    @property
    def variables(self) -> Tuple[Tuple[VariableId, VariableBounds], ...]:
        return tuple(self._vars)

    @property
    def variable_ids(self) -> Tuple[VariableId, ...]:
        return tuple(vid for vid, _ in self._vars)

    def variable(self, var_name: str, subscripts: Sequence[int] = ()) -> VariableId:
        """Look up an existing variable by name and subscripts."""
        name = canonical_name(self.label, var_name, subscripts)
        idx = self._index_by_name.get(name)
        if idx is None:
            raise ModelError(f"no variable {name} on this node")
        return self._vars[idx][0]

    def variable_by_index(self, index: int) -> Tuple[VariableId, VariableBounds]:
        if not 0 <= index < len(self._vars):
            raise ModelError(f"node {self.label} has no variable index {index}")
        return self._vars[index]

    def bounds_of(self, vid: VariableId) -> VariableBounds:
        self._check_owned(vid)
        return self._vars[vid.index][1]

    def set_bounds(self, vid: VariableId, bounds: VariableBounds) -> None:
        self._check_owned(vid)
        if not isinstance(bounds, VariableBounds):
            raise ModelError(f"bounds must be VariableBounds, got {bounds!r}")
        self._vars[vid.index] = (vid, bounds)

    def add_constraint(self, con: Constraint) -> ConstraintRef:
        """Add a node-local constraint; every variable must live on this node."""
        if not isinstance(con, Constraint):
            raise ModelError(f"expected Constraint, got {con!r}")
        for key in con.body.terms:
            self._check_owned(key, context="constraint")
        self._constraints.append(con)
        return ConstraintRef("node", self.id, len(self._constraints) - 1)

    @property
    def constraints(self) -> Tuple[Constraint, ...]:
        return tuple(self._constraints)

    def set_objective(self, expr) -> None:
        """Set this node's objective fragment (affine, own variables only)."""
        e = as_expr(expr)
        for key in e.terms:
            self._check_owned(key, context="objective")
        self._objective = e

    @property
    def objective(self) -> AffineExpr:
        return self._objective

    def _check_owned(self, key, context: str = "expression") -> None:
        if not isinstance(key, VariableId):
            raise ModelError(f"{context} term {key!r} is not a variable id")
        if key.node != self.id or key.index >= len(self._vars) \
                or self._vars[key.index][0] != key:
            raise ModelError(
                f"variable {key.name} does not belong to node {self.label}; "
                f"use a link constraint for variables that span nodes")

    def __repr__(self):
        return f"<OptiNode {self.label} vars={len(self._vars)} cons={len(self._constraints)}>"


class OptiEdge:
    """Hyperedge holding linking constraints over a fixed incident-node set."""

    __slots__ = ("id", "incident_nodes", "_constraints")

    def __init__(self, incident_nodes: Iterable[str]):
        self.id = _new_id()
        self.incident_nodes = frozenset(incident_nodes)
        self._constraints: List[Constraint] = []

    @property
    def link_constraints(self) -> Tuple[Constraint, ...]:
        return tuple(self._constraints)

    def __repr__(self):
        return f"<OptiEdge nodes={len(self.incident_nodes)} cons={len(self._constraints)}>"


class OptiGraph:
    """Hierarchical hypergraph of optimization subproblems.

    All mutations must come from one logical thread at a time; read-only
    snapshots may be shared once building is done.
    """

    def __init__(self, name: str = "", graph_id: Optional[str] = None):
        self.id = graph_id or _new_id()
        self.name = name
        self._nodes: List[OptiNode] = []
        self._node_by_id: Dict[str, OptiNode] = {}
        self._labels: set = set()
        self._edges: List[OptiEdge] = []
        self._edge_by_set: Dict[frozenset, OptiEdge] = {}
        self._subgraphs: List["OptiGraph"] = []
        self._parent: Optional["OptiGraph"] = None

    # -- structure ---------------------------------------------------------

    @property
    def nodes(self) -> Tuple[OptiNode, ...]:
        return tuple(self._nodes)

    @property
    def edges(self) -> Tuple[OptiEdge, ...]:
        return tuple(self._edges)

    @property
    def subgraphs(self) -> Tuple["OptiGraph", ...]:
        return tuple(self._subgraphs)

    @property
    def parent(self) -> Optional["OptiGraph"]:
        return self._parent

    def add_node(self, label: str, _node_id: Optional[str] = None) -> OptiNode:
        """Create a node with a label unique within this graph."""
        if label in self._labels:
            raise ModelError(f"node label {label!r} already used in this graph")
        node = OptiNode(label, node_id=_node_id)
        if node.id in self._node_by_id:
            raise ModelError(f"node id {node.id} already present")
        self._nodes.append(node)
        self._node_by_id[node.id] = node
        self._labels.add(label)
        return node

    def add_subgraph(self, child: "OptiGraph") -> "OptiGraph":
        """Nest `child` under this graph; a graph has at most one parent."""
        if not isinstance(child, OptiGraph):
            raise ModelError(f"expected OptiGraph, got {child!r}")
        if child._parent is not None:
            raise ModelError("subgraph already has a parent graph")
        if child is self or child._contains_graph(self):
            raise ModelError("subgraph nesting would create a cycle")
        own_graphs = {g.id for g in self._root().all_graphs()}
        own_nodes = {n.id for n in self._root().all_nodes()}
        for g in child.all_graphs():
            if g.id in own_graphs:
                raise ModelError(f"graph id {g.id} already present in hierarchy")
        for n in child.all_nodes():
            if n.id in own_nodes:
                raise ModelError(f"node id {n.id} already present in hierarchy")
        child._parent = self
        self._subgraphs.append(child)
        return child

    def _contains_graph(self, other: "OptiGraph") -> bool:
        for g in self._subgraphs:
            if g is other or g._contains_graph(other):
                return True
        return False

    def _root(self) -> "OptiGraph":
        g = self
        while g._parent is not None:
            g = g._parent
        return g

    def all_graphs(self) -> List["OptiGraph"]:
        """This graph plus all descendants, preorder."""
        out = [self]
        for g in self._subgraphs:
            out.extend(g.all_graphs())
        return out

    def all_nodes(self) -> List[OptiNode]:
        """Own nodes in creation order, then descendants' nodes, preorder."""
        out = list(self._nodes)
        for g in self._subgraphs:
            out.extend(g.all_nodes())
        return out

    def all_edges(self) -> List[OptiEdge]:
        out = list(self._edges)
        for g in self._subgraphs:
            out.extend(g.all_edges())
        return out

    @property
    def node_count(self) -> int:
        return len(self._nodes) + sum(g.node_count for g in self._subgraphs)

    def find_node(self, node_id: str) -> Optional[OptiNode]:
        node = self._node_by_id.get(node_id)
        if node is not None:
            return node
        for g in self._subgraphs:
            node = g.find_node(node_id)
            if node is not None:
                return node
        return None

    def node_by_label(self, label: str) -> OptiNode:
        for node in self._nodes:
            if node.label == label:
                return node
        raise ModelError(f"no node labeled {label!r} in this graph")

    # -- linking -----------------------------------------------------------

    def add_link_constraint(self, con: Constraint) -> OptiEdge:
        """Store a constraint spanning >= 2 nodes of this graph's hierarchy.

        Reuses the edge with the same incident-node set when one exists;
        otherwise a new hyperedge is created.
        """
        if not isinstance(con, Constraint):
            raise ModelError(f"expected Constraint, got {con!r}")
        owners = set()
        for key in con.body.terms:
            if not isinstance(key, VariableId):
                raise ModelError(f"link constraint term {key!r} is not a variable id")
            node = self.find_node(key.node)
            if node is None:
                raise ModelError(
                    f"variable {key.name} is not in this graph's hierarchy")
            owners.add(node.id)
        if len(owners) < 2:
            raise ModelError(
                "link constraint must span at least 2 nodes; "
                "single-node constraints belong on the node itself")
        key_set = frozenset(owners)
        edge = self._edge_by_set.get(key_set)
        if edge is None:
            edge = OptiEdge(key_set)
            self._edges.append(edge)
            self._edge_by_set[key_set] = edge
        edge._constraints.append(con)
        return edge

    # -- objectives --------------------------------------------------------

    def set_to_node_objectives(self) -> None:
        """Declare the graph objective as the sum of node objectives.

        That sum is the only supported graph objective, so this is a
        readability marker in build scripts; node objectives are validated
        when they are set.
        """
        return None

    def objective_expr(self) -> AffineExpr:
        total = AffineExpr()
        for node in self.all_nodes():
            total = total + node.objective
        return total

    def flatten(self) -> "StandardFormProblem":
        return flatten(self)

    def __repr__(self):
        return (f"<OptiGraph nodes={len(self._nodes)} edges={len(self._edges)} "
                f"subgraphs={len(self._subgraphs)}>")


@dataclass
class StandardFormProblem:
    """Flattened affine problem: objective, rows, bounds, variable order.

    Row bodies carry no constants (they are folded into the rhs during
    flattening), and `row_provenance[i]` records the node or edge the row
    came from.
    """

    objective: AffineExpr
    rows: List[Constraint]
    bounds: Dict[VariableId, VariableBounds]
    variable_order: List[VariableId]
    row_provenance: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def n_variables(self) -> int:
        return len(self.variable_order)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def has_integer_variables(self) -> bool:
        return any(self.bounds[v].is_integer for v in self.variable_order)

    def copy(self) -> "StandardFormProblem":
        return StandardFormProblem(
            objective=self.objective,
            rows=list(self.rows),
            bounds=dict(self.bounds),
            variable_order=list(self.variable_order),
            row_provenance=list(self.row_provenance),
        )


def _normalized(con: Constraint) -> Constraint:
    if con.body.constant == 0.0:
        return con
    return Constraint(AffineExpr(con.body.terms), con.sense,
                      con.rhs - con.body.constant)


def flatten(g: OptiGraph) -> StandardFormProblem:
    """Flatten a graph hierarchy into one standard-form problem.

    Variable order is node creation order (preorder over the hierarchy)
    then per-node index; rows are all node constraints in that node order,
    then all edge constraints (each graph's own edges before its
    subgraphs'). The ordering is deterministic for a given build script.
    """
    order: List[VariableId] = []
    bounds: Dict[VariableId, VariableBounds] = {}
    for node in g.all_nodes():
        for vid, b in node.variables:
            order.append(vid)
            bounds[vid] = b
    rows: List[Constraint] = []
    provenance: List[Tuple[str, str]] = []
    for node in g.all_nodes():
        for con in node.constraints:
            rows.append(_normalized(con))
            provenance.append(("node", node.id))
    for graph in g.all_graphs():
        for edge in graph.edges:
            for con in edge.link_constraints:
                rows.append(_normalized(con))
                provenance.append(("edge", edge.id))
    objective = g.objective_expr()
    known = set(order)
    for con in rows:
        for key in con.body.terms:
            if key not in known:
                raise ModelError(f"row references unknown variable {key!r}")
    for key in objective.terms:
        if key not in known:
            raise ModelError(f"objective references unknown variable {key!r}")
    return StandardFormProblem(objective=objective, rows=rows, bounds=bounds,
                               variable_order=order, row_provenance=provenance)


# -- canonical text forms --------------------------------------------------


def _expr_text(terms: Mapping, constant: float, name_of) -> str:
    parts = [f"{coef!r}*{name_of(key)}"
             for key, coef in sorted(terms.items(), key=lambda kv: name_of(kv[0]))]
    if constant != 0.0 or not parts:
        parts.append(repr(float(constant)))
    return " + ".join(parts)


def dump_graph(g: OptiGraph) -> str:
    """Deterministic text export of a graph hierarchy.

    One record per node, variable, objective, constraint, and edge; term
    keys sorted by name; no uuids, so two graphs built by the same script
    (locally, remotely, batched, or per-call) dump byte-identically.
    Subgraph sections are named by position: the root is `g`, its children
    `g.0`, `g.1`, ...
    """
    path_of_node: Dict[str, str] = {}
    label_of_node: Dict[str, str] = {}

    def index_paths(graph: OptiGraph, path: str):
        for node in graph.nodes:
            path_of_node[node.id] = path
            label_of_node[node.id] = node.label
        for i, sub in enumerate(graph.subgraphs):
            index_paths(sub, f"{path}.{i}")

    index_paths(g, "g")

    def qualified_var(key: VariableId) -> str:
        return f"{path_of_node[key.node]}/{key.name}"

    def qualified_node(node_id: str) -> str:
        return f"{path_of_node[node_id]}/{label_of_node[node_id]}"

    lines: List[str] = []

    def emit(graph: OptiGraph, path: str):
        lines.append(f"graph {path} nodes={len(graph.nodes)} "
                     f"edges={len(graph.edges)} subgraphs={len(graph.subgraphs)}")
        for node in sorted(graph.nodes, key=lambda n: n.label):
            lines.append(f"node {path}/{node.label}")
            for vid, b in node.variables:
                lines.append(f"var {path}/{vid.name} in [{b.lower!r}, {b.upper!r}] "
                             f"{b.integrality}")
            if node.objective.terms or node.objective.constant != 0.0:
                text = _expr_text(node.objective.terms, node.objective.constant,
                                  qualified_var)
                lines.append(f"obj {path}/{node.label} : {text}")
            for k, con in enumerate(node.constraints):
                text = _expr_text(con.body.terms, con.body.constant, qualified_var)
                lines.append(f"con {path}/{node.label}#{k} : {text} {con.sense} "
                             f"{con.rhs!r}")
        edge_records = []
        for edge in graph.edges:
            incident = "[" + ", ".join(sorted(qualified_node(n)
                                              for n in edge.incident_nodes)) + "]"
            body = [f"edge {path} {incident}"]
            for k, con in enumerate(edge.link_constraints):
                text = _expr_text(con.body.terms, con.body.constant, qualified_var)
                body.append(f"link {path} {incident}#{k} : {text} {con.sense} "
                            f"{con.rhs!r}")
            edge_records.append((incident, body))
        for _, body in sorted(edge_records, key=lambda r: r[0]):
            lines.extend(body)
        for i, sub in enumerate(graph.subgraphs):
            emit(sub, f"{path}.{i}")

    emit(g, "g")
    return "\n".join(lines) + "\n"


def canonical_problem_text(p: StandardFormProblem) -> str:
    """Canonical text of a flattened problem, keyed by variable names.

    Rows are sorted, so two problems compare equal iff they have the same
    objective, row multiset, and bounds under variable-name identity.
    Raises if two distinct variable ids share a canonical name (the caller
    must then compare graphs structurally instead).
    """
    by_name: Dict[str, VariableId] = {}
    for vid in p.variable_order:
        other = by_name.get(vid.name)
        if other is not None and other != vid:
            raise ModelError(f"canonical name collision: {vid.name}")
        by_name[vid.name] = vid

    name_of = lambda key: key.name
    lines = ["min : " + _expr_text(p.objective.terms, p.objective.constant, name_of)]
    row_lines = []
    for con in p.rows:
        text = _expr_text(con.body.terms, con.body.constant, name_of)
        row_lines.append(f"row : {text} {con.sense} {con.rhs!r}")
    lines.extend(sorted(row_lines))
    for name in sorted(by_name):
        b = p.bounds[by_name[name]]
        lines.append(f"bound : {name} in [{b.lower!r}, {b.upper!r}] {b.integrality}")
    return "\n".join(lines) + "\n"
