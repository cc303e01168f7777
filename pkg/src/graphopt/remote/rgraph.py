"""Coordinator-side remote graphs, proxy helpers, and batched build programs.

A RemoteOptiGraph never stores nodes or edges itself: every mutation is one
request to the worker that owns the graph, and the coordinator keeps only
references (uuids, names, handles). The two exceptions, both coordinator
state by design, are the subgraph hierarchy between wrappers and the
inter-worker edges, which no single worker could hold.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

from ..expr import (
    Constraint,
    ModelError,
    VariableBounds,
    VariableId,
    _make_constraint,
    as_expr,
    canonical_name,
)
from ..graph import OptiEdge, OptiGraph, OptiNode, dump_graph
from .refs import (
    ProxyEdgeRef,
    ProxyNodeRef,
    ProxyVariableRef,
    RemoteEdgeRef,
    RemoteNodeRef,
    RemoteVariableRef,
    proxy_from_wire,
    proxy_to_wire,
)
from .serde import graph_from_payload
from .wire import terms_to_wire

__all__ = [
    "RemoteOptiGraph",
    "InterWorkerEdge",
    "BuildProgram",
    "ProgramNode",
    "ProgramVariableRef",
    "to_proxy",
    "resolve_proxy",
    "proxy_to_remote",
]


# -- proxy round-trip helpers -------------------------------------------------

def to_proxy(ref):
    """Strip a local or remote reference down to its wire-minimal proxy."""
    if isinstance(ref, OptiNode):
        return ProxyNodeRef(ref.id, ref.label)
    if isinstance(ref, VariableId):
        return ProxyVariableRef(ref.node, ref.index, ref.name)
    if isinstance(ref, OptiEdge):
        return ProxyEdgeRef(ref.id)
    if isinstance(ref, RemoteNodeRef):
        return ProxyNodeRef(ref.node_id, ref.label)
    if isinstance(ref, (RemoteVariableRef, ProgramVariableRef)):
        return ProxyVariableRef(ref.vid.node, ref.vid.index, ref.vid.name)
    if isinstance(ref, RemoteEdgeRef):
        return ProxyEdgeRef(ref.edge_id)
    if isinstance(ref, (ProxyNodeRef, ProxyVariableRef, ProxyEdgeRef)):
        return ref
    raise ModelError(f"cannot take a proxy of {ref!r}")


def resolve_proxy(g: OptiGraph, proxy):
    """Resolve a proxy against a local graph: node / variable id / edge."""
    if isinstance(proxy, ProxyNodeRef):
        node = g.find_node(proxy.node_id)
        if node is None:
            raise ModelError(f"no node with id {proxy.node_id} in this graph")
        return node
    if isinstance(proxy, ProxyVariableRef):
        node = g.find_node(proxy.node_id)
        if node is None:
            raise ModelError(f"no node with id {proxy.node_id} in this graph")
        vid, _ = node.variable_by_index(proxy.index)
        if vid.name != proxy.name:
            raise ModelError(
                f"variable index {proxy.index} on node {node.label!r} is "
                f"{vid.name!r}, not {proxy.name!r}")
        return vid
    if isinstance(proxy, ProxyEdgeRef):
        for edge in g.all_edges():
            if edge.id == proxy.edge_id:
                return edge
        raise ModelError(f"no edge with id {proxy.edge_id} in this graph")
    raise ModelError(f"not a proxy reference: {proxy!r}")


def proxy_to_remote(g: "RemoteOptiGraph", proxy):
    """Attach a proxy to a remote graph, yielding a full remote reference."""
    if isinstance(proxy, ProxyNodeRef):
        return RemoteNodeRef(g, proxy.node_id, proxy.label)
    if isinstance(proxy, ProxyVariableRef):
        g.registry.note_variable_owner(proxy.node_id, g)
        return RemoteVariableRef(g, proxy.vid)
    if isinstance(proxy, ProxyEdgeRef):
        return RemoteEdgeRef(g, proxy.edge_id)
    raise ModelError(f"not a proxy reference: {proxy!r}")


# -- inter-worker edges -------------------------------------------------------

@dataclass
class InterWorkerEdge:
    """Coordinator-held hyperedge whose constraints span remote graphs."""

    id: str
    endpoints: Tuple[Tuple[str, str], ...]  # (remote graph id, node id)
    link_constraints: List[Constraint] = field(default_factory=list)

    @property
    def graph_ids(self) -> Tuple[str, ...]:
        return tuple(sorted({g for g, _ in self.endpoints}))


class RemoteOptiGraph:
    """A graph that lives on a worker, driven through its handle.

    Construction methods mirror OptiGraph's, so the same build code can
    populate either. Subgraph structure and inter-worker edges are the only
    coordinator-side state.
    """

    def __init__(self, registry, worker: int, handle: str, name: str = ""):
        self.id = uuid.uuid4().hex
        self.registry = registry
        self.worker = worker
        self.handle = handle
        self.name = name
        self._subgraphs: List["RemoteOptiGraph"] = []
        self._parent: Optional["RemoteOptiGraph"] = None
        self._interworker_edges: List[InterWorkerEdge] = []

    def _request(self, kind: str, body: Dict[str, Any]) -> Dict[str, Any]:
        return self.registry.connection(self.worker).request(
            kind, self.handle, body)

    # -- structure ----------------------------------------------------------

    @property
    def subgraphs(self) -> Tuple["RemoteOptiGraph", ...]:
        return tuple(self._subgraphs)

    @property
    def parent(self) -> Optional["RemoteOptiGraph"]:
        return self._parent

    @property
    def interworker_edges(self) -> Tuple[InterWorkerEdge, ...]:
        return tuple(self._interworker_edges)

    def all_graphs(self) -> List["RemoteOptiGraph"]:
        graphs = [self]
        for child in self._subgraphs:
            graphs.extend(child.all_graphs())
        return graphs

    def add_subgraph(self, child: "RemoteOptiGraph") -> "RemoteOptiGraph":
        """Nest ``child`` under this graph (coordinator-side bookkeeping)."""
        if not isinstance(child, RemoteOptiGraph):
            raise ModelError(f"expected RemoteOptiGraph, got {child!r}")
        if child is self or self in child.all_graphs():
            raise ModelError("a graph cannot contain itself")
        if child._parent is not None:
            raise ModelError(
                f"graph {child.name!r} already has a parent graph")
        if child.registry is not self.registry:
            raise ModelError("subgraphs must share the parent's registry")
        child._parent = self
        self._subgraphs.append(child)
        return child

    # -- node-level building --------------------------------------------------

    def add_node(self, label: str) -> RemoteNodeRef:
        body = self._request("add_node", {"label": str(label)})
        node_id, node_label = body["node"]
        self.registry.note_variable_owner(node_id, self)
        return RemoteNodeRef(self, node_id, node_label)

    def _node_add_variable(self, node: RemoteNodeRef, var_name: str,
                           bounds: VariableBounds,
                           subscripts: Sequence[int] = ()) -> RemoteVariableRef:
        body = self._request("add_variable", {
            "node": node.node_id,
            "name": str(var_name),
            "subs": [int(s) for s in subscripts],
            "lb": bounds.lower,
            "ub": bounds.upper,
            "kind": bounds.integrality,
        })
        return RemoteVariableRef(self, VariableId(*_vid_parts(body["vid"])))

    def _node_get_variable(self, node: RemoteNodeRef, var_name: str,
                           subscripts: Sequence[int] = ()) -> RemoteVariableRef:
        body = self._request("get_variable", {
            "node": node.node_id,
            "name": str(var_name),
            "subs": [int(s) for s in subscripts],
        })
        return RemoteVariableRef(self, VariableId(*_vid_parts(body["vid"])))

    def _node_add_constraint(self, node: RemoteNodeRef, con: Constraint) -> int:
        if not isinstance(con, Constraint):
            raise ModelError(f"expected Constraint, got {con!r}")
        body = self._request("add_constraint", {
            "node": node.node_id,
            "terms": terms_to_wire(con.body.terms),
            "sense": con.sense,
            "rhs": float(con.rhs),
            "constant": float(con.body.constant),
        })
        return int(body["index"])

    def _node_set_objective(self, node: RemoteNodeRef, expr) -> None:
        expr = as_expr(expr)
        self._request("set_objective", {
            "node": node.node_id,
            "terms": terms_to_wire(expr.terms),
            "constant": float(expr.constant),
        })

    def set_lower_bound(self, rvar: RemoteVariableRef, value: float) -> None:
        """Apply a new lower bound on the owning worker (one round trip)."""
        self._request("set_lower_bound", {
            "var": proxy_to_wire(to_proxy(rvar)),
            "value": float(value),
        })

    def get_bounds(self, rvar: RemoteVariableRef) -> VariableBounds:
        body = self._request("get_bounds", {
            "var": proxy_to_wire(to_proxy(rvar)),
        })
        return VariableBounds(float(body["lb"]), float(body["ub"]),
                              str(body["kind"]))

    # -- linking ---------------------------------------------------------------

    def _owner_graphs(self, con: Constraint) -> List["RemoteOptiGraph"]:
        owners: List[RemoteOptiGraph] = []
        for vid in con.body.terms:
            owner = self.registry.owner_of(vid.node)
            if owner is None:
                raise ModelError(
                    f"variable {vid.name!r} was not created through this "
                    "coordinator; its worker cannot be determined")
            if owner not in owners:
                owners.append(owner)
        return owners

    def add_link_constraint(self, con: Constraint):
        """Store a linking constraint where it belongs.

        Variables all on one remote graph → a local edge on that worker's
        graph. Variables spanning several remote graphs → a coordinator-side
        inter-worker edge.
        """
        if not isinstance(con, Constraint):
            raise ModelError(f"expected Constraint, got {con!r}")
        owners = self._owner_graphs(con)
        if len(owners) == 1:
            target = owners[0]
            body = target._request("add_link", {
                "terms": terms_to_wire(con.body.terms),
                "sense": con.sense,
                "rhs": con.rhs,
                "constant": con.body.constant,
            })
            return RemoteEdgeRef(target, body["edge"])
        return self.add_interworker_link(con)

    def add_interworker_link(self, con: Constraint) -> InterWorkerEdge:
        """Store a constraint spanning ≥ 2 remote graphs of this hierarchy.

        The constraint stays on the coordinator (workers never see it);
        edges are reused per distinct endpoint set.
        """
        if not isinstance(con, Constraint):
            raise ModelError(f"expected Constraint, got {con!r}")
        owners = self._owner_graphs(con)
        if len(owners) < 2:
            raise ModelError(
                "inter-worker link must span at least 2 remote graphs; use "
                "add_link_constraint for links within one graph")
        hierarchy = set(map(id, self.all_graphs()))
        for owner in owners:
            if id(owner) not in hierarchy:
                raise ModelError(
                    f"graph {owner.name!r} is not in this graph's hierarchy")
        endpoints = tuple(sorted({
            (self.registry.owner_of(vid.node).id, vid.node)
            for vid in con.body.terms}))
        edge = next((e for e in self._interworker_edges
                     if e.endpoints == endpoints), None)
        if edge is None:
            edge = InterWorkerEdge(uuid.uuid4().hex, endpoints)
            self._interworker_edges.append(edge)
        edge.link_constraints.append(con)
        return edge

    # -- batched building --------------------------------------------------------

    def execute(self, program: "BuildProgram") -> List[RemoteVariableRef]:
        """Run a whole build program on the worker in one round trip.

        Returns remote references for the program's fetched variables, in
        fetch order. On failure the worker graph is rolled back and the
        raised error names the failing instruction.
        """
        body = self._request("run_program",
                             {"instructions": program.instructions})
        refs = []
        for wire_ref in body["proxies"]:
            proxy = proxy_from_wire(wire_ref)
            refs.append(proxy_to_remote(self, proxy))
        return refs

    # -- inspection ---------------------------------------------------------------

    def stats(self) -> Dict[str, Any]:
        """Node/edge/variable/row counts of the worker-resident graph."""
        return self._request("graph_stats", {})

    @property
    def node_count(self) -> int:
        return int(self.stats()["nodes"])

    def set_to_node_objectives(self) -> None:
        """Objective is the sum of node objectives (always true here)."""
        return None

    def collect(self) -> OptiGraph:
        """Fetch the whole distributed graph into one local OptiGraph.

        Node ids, variable order, and names are preserved; subgraph wrappers
        become local subgraphs and inter-worker edges become ordinary edges.
        """
        payload = self._request("dump_graph", {})
        g = graph_from_payload(payload["graph"])
        for child in self._subgraphs:
            g.add_subgraph(child.collect())
        for edge in self._interworker_edges:
            for con in edge.link_constraints:
                g.add_link_constraint(con)
        return g

    def canonical_dump(self) -> str:
        return dump_graph(self.collect())

    def __repr__(self):
        return (f"RemoteOptiGraph({self.name!r}, worker={self.worker}, "
                f"handle={self.handle!r})")


def _vid_parts(data) -> Tuple[str, int, str]:
    return str(data[0]), int(data[1]), str(data[2])


# -- build programs ------------------------------------------------------------

class ProgramVariableRef:
    """Placeholder for a variable a build program will create.

    Usable in expressions within the same program; the worker resolves the
    placeholder to the real variable when the program runs.
    """

    __slots__ = ("vid",)

    def __init__(self, vid: VariableId):
        self.vid = vid

    @property
    def name(self) -> str:
        return self.vid.name

    def __add__(self, other):
        return as_expr(self) + other

    __radd__ = __add__

    def __sub__(self, other):
        return as_expr(self) - other

    def __rsub__(self, other):
        return other + (-as_expr(self))

    def __mul__(self, other):
        return as_expr(self) * other

    __rmul__ = __mul__

    def __neg__(self):
        return -as_expr(self)

    def __le__(self, other):
        return _make_constraint(self, "<=", other)

    def __ge__(self, other):
        return _make_constraint(self, ">=", other)

    def eq(self, other):
        return _make_constraint(self, "==", other)

    def __repr__(self):
        return f"ProgramVariableRef({self.vid.name!r})"


class ProgramNode:
    """A node a build program will create; mirrors the OptiNode surface."""

    __slots__ = ("program", "slot", "label", "_n_vars")

    def __init__(self, program: "BuildProgram", slot: int, label: str):
        self.program = program
        self.slot = slot
        self.label = label
        self._n_vars = 0

    def _placeholder(self, var_name: str,
                     subscripts: Sequence[int]) -> ProgramVariableRef:
        vid = VariableId(f"@p{self.slot}", self._n_vars,
                         canonical_name(self.label, var_name, subscripts))
        self._n_vars += 1
        return ProgramVariableRef(vid)

    def add_variable(self, var_name: str, bounds: VariableBounds,
                     subscripts: Sequence[int] = ()) -> ProgramVariableRef:
        self.program.instructions.append([
            "add_variable", ["slot", self.slot], str(var_name),
            [int(s) for s in subscripts],
            bounds.lower, bounds.upper, bounds.integrality])
        return self._placeholder(str(var_name), tuple(subscripts))

    def variable(self, var_name: str,
                 subscripts: Sequence[int] = ()) -> ProgramVariableRef:
        """Schedule a fetch of this variable when the program runs."""
        return self.program.fetch(self, str(var_name), tuple(subscripts))

    def add_constraint(self, con: Constraint) -> None:
        if not isinstance(con, Constraint):
            raise ModelError(f"expected Constraint, got {con!r}")
        self.program.instructions.append([
            "add_constraint", ["slot", self.slot],
            self.program._terms_to_wire(con.body.terms),
            con.sense, float(con.rhs)])

    def set_objective(self, expr) -> None:
        expr = as_expr(expr)
        self.program.instructions.append([
            "set_objective", ["slot", self.slot],
            self.program._terms_to_wire(expr.terms), float(expr.constant)])

    def __repr__(self):
        return f"ProgramNode({self.label!r}, slot={self.slot})"


class BuildProgram:
    """A recorded list of build instructions, executed in one round trip.

    The per-call building style costs one request per mutation; a program
    ships them all at once, and fetches (the only way to get references
    back out) are declared up front with :meth:`ProgramNode.variable`.
    """

    def __init__(self):
        self.instructions: List[List[Any]] = []
        self.fetches: List[ProgramVariableRef] = []
        self._n_slots = 0

    def add_node(self, label: str) -> ProgramNode:
        node = ProgramNode(self, self._n_slots, str(label))
        self._n_slots += 1
        self.instructions.append(["add_node", str(label)])
        return node

    def add_link_constraint(self, con: Constraint) -> None:
        if not isinstance(con, Constraint):
            raise ModelError(f"expected Constraint, got {con!r}")
        self.instructions.append([
            "add_link", self._terms_to_wire(con.body.terms),
            con.sense, float(con.rhs)])

    def fetch(self, node: ProgramNode, var_name: str,
              subscripts: Sequence[int] = ()) -> ProgramVariableRef:
        """Request a variable proxy in the program's reply.

        The returned placeholder marks a position in the reply's proxy list;
        within program expressions, use the ``add_variable`` result instead.
        """
        self.instructions.append([
            "fetch_variable", ["slot", node.slot], str(var_name),
            [int(s) for s in subscripts]])
        ref = ProgramVariableRef(VariableId(
            f"@p{node.slot}", -1 - len(self.fetches),
            canonical_name(node.label, str(var_name), tuple(subscripts))))
        self.fetches.append(ref)
        return ref

    def _terms_to_wire(self, terms) -> List[List[Any]]:
        wire = []
        for vid in sorted(terms, key=lambda v: (v.name, v.node, v.index)):
            coef = float(terms[vid])
            if vid.node.startswith("@p"):
                slot = int(vid.node[2:])
                if not 0 <= slot < self._n_slots:
                    raise ModelError(
                        f"expression references unknown program slot {slot}")
                if vid.index < 0:
                    raise ModelError(
                        f"fetched placeholder {vid.name!r} cannot appear in "
                        "program expressions; use the add_variable result")
                wire.append([["slot", slot, vid.index], coef])
            else:
                wire.append([["vid", vid.node, vid.index, vid.name], coef])
        return wire
