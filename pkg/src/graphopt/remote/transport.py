"""Transports and the worker registry.

Every worker — including worker 1, which lives in the coordinating process —
is addressed through the same framed request/response interface, so command
scripts behave identically in-process and over loopback TCP. Requests to one
worker are serialized FIFO by a per-connection lock; distinct workers may be
driven concurrently from separate coordinator threads.
"""

from __future__ import annotations

import itertools
import socket
import threading
import time
from typing import Any, Dict, List, Optional, Tuple

from ..expr import ModelError
from .wire import (
    FrameDecoder,
    Transcript,
    TransportError,
    decode_message,
    encode_frame,
    encode_message,
)
from .worker import Worker

__all__ = [
    "Connection",
    "InProcessConnection",
    "TcpConnection",
    "RemoteOperationError",
    "WorkerRegistry",
    "serve_worker",
]

_REQUEST_IDS = itertools.count(1)


class RemoteOperationError(ModelError):
    """Validation error raised on a worker and relayed verbatim."""

    def __init__(self, message: str, error_type: str = "ModelError",
                 instruction: Optional[int] = None):
        super().__init__(message)
        self.error_type = error_type
        self.instruction = instruction


class Connection:
    """One framed request/response channel to a single worker."""

    def __init__(self, worker_id: int, transcript: Optional[Transcript] = None):
        self.worker_id = worker_id
        self.transcript = transcript
        self._lock = threading.Lock()

    def request(self, kind: str, graph_handle: str, body: Dict[str, Any],
                timeout: Optional[float] = None) -> Dict[str, Any]:
        """Send one request and return the matching ok-reply body."""
        with self._lock:
            request_id = next(_REQUEST_IDS)
            payload = encode_message(request_id, kind, graph_handle, body)
            if self.transcript is not None:
                self.transcript.record(payload)
            reply_payload = self._roundtrip(payload, timeout)
            if self.transcript is not None:
                self.transcript.record(reply_payload)
        reply = decode_message(reply_payload)
        if reply.request_id != request_id:
            raise TransportError(
                f"worker {self.worker_id}: response id {reply.request_id} "
                f"does not match request id {request_id}")
        if reply.kind == "error":
            raise RemoteOperationError(
                str(reply.body.get("message", "remote error")),
                str(reply.body.get("error_type", "ModelError")),
                reply.body.get("instruction"))
        if reply.kind != "ok":
            raise TransportError(
                f"worker {self.worker_id}: unexpected reply kind {reply.kind!r} "
                f"for request id {request_id}")
        return reply.body

    def _roundtrip(self, payload: bytes, timeout: Optional[float]) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass


class InProcessConnection(Connection):
    """Frames routed directly to a Worker living in this process."""

    def __init__(self, worker: Worker, worker_id: int,
                 transcript: Optional[Transcript] = None):
        super().__init__(worker_id, transcript)
        self.worker = worker
        self._to_worker = FrameDecoder()
        self._to_coordinator = FrameDecoder()

    def _roundtrip(self, payload: bytes, timeout: Optional[float]) -> bytes:
        incoming = self._to_worker.feed(encode_frame(payload))
        replies: List[bytes] = []
        for request in incoming:
            replies.extend(
                self._to_coordinator.feed(
                    encode_frame(self.worker.handle_payload(request))))
        if len(replies) != 1:
            raise TransportError(
                f"worker {self.worker_id}: expected 1 reply frame, "
                f"got {len(replies)}")
        return replies[0]


class TcpConnection(Connection):
    """Frames over a loopback/LAN TCP socket."""

    def __init__(self, address: Tuple[str, int], worker_id: int,
                 transcript: Optional[Transcript] = None):
        super().__init__(worker_id, transcript)
        self.address = address
        try:
            self._sock = socket.create_connection(address, timeout=5.0)
        except OSError as exc:
            raise TransportError(
                f"worker {worker_id}: cannot connect to "
                f"{address[0]}:{address[1]}: {exc}") from exc
        self._sock.settimeout(None)
        self._decoder = FrameDecoder()
        self._pending: List[bytes] = []

    def _roundtrip(self, payload: bytes, timeout: Optional[float]) -> bytes:
        self._sock.settimeout(timeout)
        try:
            self._sock.sendall(encode_frame(payload))
            while not self._pending:
                chunk = self._sock.recv(65536)
                if not chunk:
                    raise TransportError(
                        f"worker {self.worker_id}: connection closed while "
                        "waiting for a response")
                self._pending.extend(self._decoder.feed(chunk))
        except socket.timeout as exc:
            raise TransportError(
                f"worker {self.worker_id}: timed out after {timeout}s") from exc
        except OSError as exc:
            raise TransportError(
                f"worker {self.worker_id}: transport failure: {exc}") from exc
        finally:
            self._sock.settimeout(None)
        return self._pending.pop(0)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


def serve_worker(worker: Worker, listener: socket.socket) -> None:
    """Run a worker's message loop over a listening TCP socket.

    Accepts any number of client connections; all requests are serialized
    through one lock so the worker stays a single-threaded message loop.
    Returns once the worker receives a shutdown request.
    """
    guard = threading.Lock()
    threads: List[threading.Thread] = []
    listener.settimeout(0.1)
    try:
        while not worker.stopping:
            try:
                conn, _ = listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            t = threading.Thread(target=_serve_connection,
                                 args=(worker, conn, guard), daemon=True)
            t.start()
            threads.append(t)
    finally:
        listener.close()
    for t in threads:
        t.join(timeout=1.0)


def _serve_connection(worker: Worker, sock: socket.socket,
                      guard: threading.Lock) -> None:
    decoder = FrameDecoder()
    with sock:
        sock.settimeout(0.1)
        while not worker.stopping:
            try:
                chunk = sock.recv(65536)
            except socket.timeout:
                continue
            except OSError:
                return
            if not chunk:
                return
            for payload in decoder.feed(chunk):
                with guard:
                    reply = worker.handle_payload(payload)
                try:
                    sock.sendall(encode_frame(reply))
                except OSError:
                    return


def _parse_listen(spec: str) -> Tuple[str, int]:
    host, sep, port = spec.rpartition(":")
    if not sep or not port.isdigit():
        raise ModelError(f"listen spec must be host:port, got {spec!r}")
    return host or "127.0.0.1", int(port)


class WorkerRegistry:
    """The pool of workers a coordinator can talk to.

    Worker 1 is always present and lives in the coordinating process itself,
    addressed through the same handle/frame mechanism as spawned workers.
    """

    def __init__(self, transcript: Optional[Transcript] = None):
        self.transcript = transcript if transcript is not None else Transcript()
        self._connections: Dict[int, Connection] = {
            1: InProcessConnection(Worker(), 1, self.transcript)}
        self._owners: Dict[str, Any] = {}
        self._server_threads: List[threading.Thread] = []

    # -- pool management ----------------------------------------------------

    @property
    def worker_ids(self) -> List[int]:
        return sorted(self._connections)

    def connection(self, worker: int) -> Connection:
        conn = self._connections.get(worker)
        if conn is None:
            raise ModelError(f"unknown worker id {worker}")
        return conn

    def spawn_workers(self, n: int, transport: str = "in_process",
                      listen: str = "127.0.0.1:0") -> List[int]:
        """Start ``n`` fresh workers (ids continue after the highest).

        ``transport`` is ``"in_process"`` (worker object in this process) or
        ``"tcp"`` (worker served over a loopback socket, spoken to through
        the same wire protocol).
        """
        if n < 1:
            raise ModelError(f"worker count must be >= 1, got {n}")
        if transport not in ("in_process", "tcp"):
            raise ModelError(f"unknown transport {transport!r}")
        ids = []
        for _ in range(n):
            worker_id = max(self._connections) + 1
            if transport == "in_process":
                conn: Connection = InProcessConnection(
                    Worker(), worker_id, self.transcript)
            else:
                host, port = _parse_listen(listen)
                worker = Worker()
                try:
                    listener = socket.create_server((host, port))
                except OSError as exc:
                    raise TransportError(
                        f"cannot bind worker listener on {host}:{port}: "
                        f"{exc}") from exc
                address = listener.getsockname()[:2]
                thread = threading.Thread(target=serve_worker,
                                          args=(worker, listener), daemon=True)
                thread.start()
                self._server_threads.append(thread)
                conn = TcpConnection(address, worker_id, self.transcript)
            self._connections[worker_id] = conn
            ids.append(worker_id)
        return ids

    def connect_tcp_worker(self, address: str) -> int:
        """Attach an externally started worker daemon; returns its new id."""
        worker_id = max(self._connections) + 1
        conn = TcpConnection(_parse_listen(address), worker_id, self.transcript)
        self._connections[worker_id] = conn
        return worker_id

    def ping(self, worker: int, timeout: float = 5.0) -> float:
        """Round-trip a liveness probe; returns latency in seconds."""
        start = time.perf_counter()
        self.connection(worker).request("ping", "", {}, timeout=timeout)
        return time.perf_counter() - start

    def close(self) -> None:
        """Shut every worker down (best effort) and release transports."""
        for conn in self._connections.values():
            try:
                conn.request("shutdown", "", {}, timeout=2.0)
            except (TransportError, RemoteOperationError):
                pass
            conn.close()
        for thread in self._server_threads:
            thread.join(timeout=2.0)
        self._server_threads.clear()

    def __enter__(self) -> "WorkerRegistry":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- graph creation and ownership ----------------------------------------

    def remote_graph(self, worker: int, name: str = ""):
        """Create an empty OptiGraph on ``worker``; returns its wrapper."""
        from .rgraph import RemoteOptiGraph

        body = self.connection(worker).request("new_graph", "", {"name": name})
        return RemoteOptiGraph(self, worker, body["handle"], name)

    def note_variable_owner(self, node_id: str, graph) -> None:
        self._owners[node_id] = graph

    def owner_of(self, node_id: str):
        return self._owners.get(node_id)
