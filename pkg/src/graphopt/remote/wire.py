"""Framed wire protocol: 4-byte big-endian length prefix + UTF-8 JSON payload.

Every message is one JSON object with keys emitted in the fixed order
{request_id, kind, graph_handle, body}. Requests carry the operation name in
`kind`; responses use kind "ok" or "error". Both endpoints are this codebase,
so the JSON dialect intentionally includes the Infinity/-Infinity literals
for unbounded variable bounds.
"""

from __future__ import annotations

import json
import struct
import threading
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

from ..expr import VariableId

__all__ = [
    "MAX_FRAME",
    "Message",
    "TransportError",
    "encode_frame",
    "FrameDecoder",
    "encode_message",
    "decode_message",
    "terms_to_wire",
    "terms_from_wire",
    "Transcript",
]

MAX_FRAME = 64 * 1024 * 1024
_LEN = struct.Struct(">I")


class TransportError(RuntimeError):
    """Connection, framing, or worker-liveness failure."""


@dataclass
class Message:
    request_id: int
    kind: str
    graph_handle: Optional[str]
    body: Dict[str, Any]


def encode_message(request_id: int, kind: str, graph_handle: Optional[str],
                   body: Dict[str, Any]) -> bytes:
    """Encode one message payload (no frame header) with fixed key order."""
    record = {
        "request_id": request_id,
        "kind": kind,
        "graph_handle": graph_handle,
        "body": body,
    }
    return json.dumps(record, separators=(",", ":")).encode("utf-8")


def decode_message(payload: bytes) -> Message:
    try:
        record = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TransportError(f"malformed message payload: {exc}") from exc
    if not isinstance(record, dict):
        raise TransportError("message payload is not an object")
    try:
        return Message(int(record["request_id"]), str(record["kind"]),
                       record["graph_handle"], record["body"])
    except KeyError as exc:
        raise TransportError(f"message missing field {exc}") from exc


def encode_frame(payload: bytes) -> bytes:
    if len(payload) > MAX_FRAME:
        raise TransportError(f"frame of {len(payload)} bytes exceeds limit")
    return _LEN.pack(len(payload)) + payload


class FrameDecoder:
    """Incremental decoder from a byte stream to complete payloads."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> List[bytes]:
        self._buf.extend(data)
        out = []
        while True:
            if len(self._buf) < _LEN.size:
                return out
            (length,) = _LEN.unpack_from(self._buf)
            if length > MAX_FRAME:
                raise TransportError(f"declared frame of {length} bytes exceeds limit")
            if len(self._buf) < _LEN.size + length:
                return out
            out.append(bytes(self._buf[_LEN.size:_LEN.size + length]))
            del self._buf[:_LEN.size + length]


def terms_to_wire(terms) -> List[List[Any]]:
    """Serialize {VariableId: coef} deterministically (sorted by name, node)."""
    items = sorted(terms.items(), key=lambda kv: (kv[0].name, kv[0].node, kv[0].index))
    return [[[v.node, v.index, v.name], float(c)] for v, c in items]


def terms_from_wire(pairs) -> Dict[VariableId, float]:
    out: Dict[VariableId, float] = {}
    for (node, index, name), coef in pairs:
        out[VariableId(str(node), int(index), str(name))] = float(coef)
    return out


class Transcript:
    """Captured frames, one per line: 8-hex-digit payload length + payload."""

    def __init__(self):
        self._lock = threading.Lock()
        self._payloads: List[bytes] = []

    def record(self, payload: bytes) -> None:
        with self._lock:
            self._payloads.append(bytes(payload))

    @property
    def payloads(self) -> List[bytes]:
        with self._lock:
            return list(self._payloads)

    @property
    def messages(self) -> List[Message]:
        return [decode_message(p) for p in self.payloads]

    def lines(self) -> List[str]:
        return [f"{len(p):08x} {p.decode('utf-8')}" for p in self.payloads]

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.lines():
                fh.write(line + "\n")

    def request_count(self) -> int:
        return sum(1 for m in self.messages if m.kind not in ("ok", "error"))
