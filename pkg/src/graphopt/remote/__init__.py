"""Distributed graph layer: workers, wire protocol, remote graphs."""

from .refs import (
    ProxyEdgeRef,
    ProxyNodeRef,
    ProxyVariableRef,
    RemoteEdgeRef,
    RemoteNodeRef,
    RemoteVariableRef,
)
from .rgraph import (
    BuildProgram,
    InterWorkerEdge,
    ProgramNode,
    ProgramVariableRef,
    RemoteOptiGraph,
    proxy_to_remote,
    resolve_proxy,
    to_proxy,
)
from .serde import graph_from_payload, graph_to_payload
from .transport import (
    Connection,
    InProcessConnection,
    RemoteOperationError,
    TcpConnection,
    WorkerRegistry,
    serve_worker,
)
from .wire import FrameDecoder, Transcript, TransportError, encode_frame
from .worker import Worker

__all__ = [
    "BuildProgram",
    "Connection",
    "FrameDecoder",
    "InProcessConnection",
    "InterWorkerEdge",
    "ProgramNode",
    "ProgramVariableRef",
    "ProxyEdgeRef",
    "ProxyNodeRef",
    "ProxyVariableRef",
    "RemoteEdgeRef",
    "RemoteNodeRef",
    "RemoteOperationError",
    "RemoteOptiGraph",
    "RemoteVariableRef",
    "TcpConnection",
    "Transcript",
    "TransportError",
    "Worker",
    "WorkerRegistry",
    "encode_frame",
    "graph_from_payload",
    "graph_to_payload",
    "proxy_to_remote",
    "resolve_proxy",
    "serve_worker",
    "to_proxy",
]
