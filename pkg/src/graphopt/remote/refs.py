"""Reference types for objects living on workers.

Proxy refs are the wire-minimal identifiers (uuids, an index, a name) that
travel between coordinator and workers; they never carry graph payload.
Remote refs are the user-facing handles on the coordinator: a proxy plus the
owning remote graph, usable directly in expressions and constraints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, List, Tuple

from ..expr import VariableId, _make_constraint, as_expr
from .wire import TransportError

__all__ = [
    "ProxyNodeRef",
    "ProxyVariableRef",
    "ProxyEdgeRef",
    "RemoteNodeRef",
    "RemoteVariableRef",
    "RemoteEdgeRef",
    "proxy_to_wire",
    "proxy_from_wire",
]


@dataclass(frozen=True)
class ProxyNodeRef:
    node_id: str
    label: str


@dataclass(frozen=True)
class ProxyVariableRef:
    node_id: str
    index: int
    name: str

    @property
    def vid(self) -> VariableId:
        return VariableId(self.node_id, self.index, self.name)


@dataclass(frozen=True)
class ProxyEdgeRef:
    edge_id: str


def proxy_to_wire(ref) -> List[Any]:
    if isinstance(ref, ProxyNodeRef):
        return ["n", ref.node_id, ref.label]
    if isinstance(ref, ProxyVariableRef):
        return ["v", ref.node_id, ref.index, ref.name]
    if isinstance(ref, ProxyEdgeRef):
        return ["e", ref.edge_id]
    raise TransportError(f"not a proxy reference: {ref!r}")


def proxy_from_wire(data):
    tag = data[0]
    if tag == "n":
        return ProxyNodeRef(str(data[1]), str(data[2]))
    if tag == "v":
        return ProxyVariableRef(str(data[1]), int(data[2]), str(data[3]))
    if tag == "e":
        return ProxyEdgeRef(str(data[1]))
    raise TransportError(f"unknown proxy tag {tag!r}")


class RemoteNodeRef:
    """Coordinator-side handle to a node on a worker-resident graph."""

    __slots__ = ("graph", "node_id", "label")

    def __init__(self, graph, node_id: str, label: str):
        self.graph = graph
        self.node_id = node_id
        self.label = label

    @property
    def worker(self) -> int:
        return self.graph.worker

    def add_variable(self, var_name: str, bounds, subscripts: Tuple[int, ...] = ()):
        return self.graph._node_add_variable(self, var_name, bounds, subscripts)

    def variable(self, var_name: str, subscripts: Tuple[int, ...] = ()):
        return self.graph._node_get_variable(self, var_name, subscripts)

    def add_constraint(self, con):
        return self.graph._node_add_constraint(self, con)

    def set_objective(self, expr) -> None:
        self.graph._node_set_objective(self, expr)

    def __repr__(self):
        return f"RemoteNodeRef({self.label!r}, worker={self.worker})"


class RemoteVariableRef:
    """Coordinator-side handle to a worker-resident variable.

    Exposes `.vid`, so expressions over remote variables build the same
    affine forms as local ones.
    """

    __slots__ = ("graph", "vid")

    def __init__(self, graph, vid: VariableId):
        self.graph = graph
        self.vid = vid

    @property
    def worker(self) -> int:
        return self.graph.worker

    @property
    def name(self) -> str:
        return self.vid.name

    def to_proxy(self) -> ProxyVariableRef:
        return ProxyVariableRef(self.vid.node, self.vid.index, self.vid.name)

    def set_lower_bound(self, value: float) -> None:
        self.graph.set_lower_bound(self, value)

    def get_bounds(self):
        return self.graph.get_bounds(self)

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
        return f"RemoteVariableRef({self.vid.name!r}, worker={self.worker})"


class RemoteEdgeRef:
    """Coordinator-side handle to a linking edge on a worker-resident graph."""

    __slots__ = ("graph", "edge_id")

    def __init__(self, graph, edge_id: str):
        self.graph = graph
        self.edge_id = edge_id

    @property
    def worker(self) -> int:
        return self.graph.worker

    def __repr__(self):
        return f"RemoteEdgeRef({self.edge_id!r}, worker={self.worker})"
