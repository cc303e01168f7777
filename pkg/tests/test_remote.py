"""Wire protocol, proxies, worker registry, and remote graph behavior."""

import json
import math
import random
import socket
import struct
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphopt import (
    ModelError,
    OptiGraph,
    VariableBounds,
    VariableId,
    build_storage_local,
    dump_graph,
)
from graphopt.remote import (
    BuildProgram,
    FrameDecoder,
    InProcessConnection,
    ProxyEdgeRef,
    ProxyNodeRef,
    ProxyVariableRef,
    RemoteOperationError,
    TransportError,
    Worker,
    WorkerRegistry,
    encode_frame,
    proxy_to_remote,
    resolve_proxy,
    serve_worker,
    to_proxy,
)
from graphopt.remote.refs import proxy_from_wire, proxy_to_wire
from graphopt.remote.wire import MAX_FRAME, decode_message, encode_message


# -- framing ------------------------------------------------------------------


def test_frame_roundtrip():
    payload = b'{"request_id":1}'
    frame = encode_frame(payload)
    assert frame[:4] == struct.pack(">I", len(payload))
    assert FrameDecoder().feed(frame) == [payload]


def test_two_frames_in_one_read():
    stream = encode_frame(b"aa") + encode_frame(b"") + encode_frame(b"bbb")
    assert FrameDecoder().feed(stream) == [b"aa", b"", b"bbb"]


@settings(max_examples=50, deadline=None)
@given(payloads=st.lists(st.binary(max_size=300), max_size=8),
       seed=st.integers(0, 2**32 - 1))
def test_decoder_reassembles_any_chunking(payloads, seed):
    stream = b"".join(encode_frame(p) for p in payloads)
    rng = random.Random(seed)
    decoder = FrameDecoder()
    out, i = [], 0
    while i < len(stream):
        j = min(len(stream), i + rng.randint(1, 7))
        out.extend(decoder.feed(stream[i:j]))
        i = j
    assert out == payloads


def test_oversized_frames_rejected():
    with pytest.raises(TransportError, match="exceeds limit"):
        encode_frame(b"\x00" * (MAX_FRAME + 1))
    forged = struct.pack(">I", MAX_FRAME + 1) + b"x"
    with pytest.raises(TransportError, match="declared frame .* exceeds"):
        FrameDecoder().feed(forged)


def test_message_encoding_fixed_key_order():
    payload = encode_message(7, "ping", None, {})
    assert payload == b'{"request_id":7,"kind":"ping","graph_handle":null,' \
                      b'"body":{}}'
    msg = decode_message(payload)
    assert (msg.request_id, msg.kind, msg.graph_handle) == (7, "ping", None)
    # unbounded bounds travel as JSON Infinity literals
    roundtrip = decode_message(encode_message(1, "ok", "g1",
                                              {"ub": math.inf}))
    assert roundtrip.body["ub"] == math.inf


def test_malformed_messages_rejected():
    with pytest.raises(TransportError, match="malformed message payload"):
        decode_message(b"\xff\xfe")
    with pytest.raises(TransportError, match="not an object"):
        decode_message(b"[1,2]")
    with pytest.raises(TransportError, match="missing field"):
        decode_message(b'{"request_id":1}')


# -- proxies ------------------------------------------------------------------


def test_proxy_roundtrips_over_storage_graph():
    g, _ = build_storage_local()
    flat = g.flatten()
    count = 0
    for node in g.all_nodes():
        proxy = proxy_from_wire(proxy_to_wire(to_proxy(node)))
        assert resolve_proxy(g, proxy) is node
        count += 1
        for vid in node.variable_ids:
            wire = proxy_to_wire(to_proxy(vid))
            assert len(json.dumps(wire, separators=(",", ":"))) <= 128
            assert resolve_proxy(g, proxy_from_wire(wire)) == vid
            count += 1
    for edge in g.all_edges():
        proxy = proxy_from_wire(proxy_to_wire(to_proxy(edge)))
        assert resolve_proxy(g, proxy) is edge
        count += 1
    assert count == len(g.all_nodes()) + len(flat.variable_order) + len(
        g.all_edges())


@given(node_id=st.text(max_size=40), index=st.integers(0, 10**6),
       name=st.text(max_size=40), label=st.text(max_size=40),
       edge_id=st.text(max_size=40))
def test_proxy_wire_roundtrip_is_identity(node_id, index, name, label,
                                          edge_id):
    for proxy in (ProxyNodeRef(node_id, label),
                  ProxyVariableRef(node_id, index, name),
                  ProxyEdgeRef(edge_id)):
        assert proxy_from_wire(proxy_to_wire(proxy)) == proxy


def test_proxy_resolution_errors():
    g = OptiGraph("here")
    node = g.add_node("spot")
    x = node.add_variable("x", VariableBounds(0.0, 1.0))
    other = OptiGraph("elsewhere")
    with pytest.raises(ModelError, match="no node with id"):
        resolve_proxy(other, to_proxy(node))
    with pytest.raises(ModelError, match=r"is 'spot\[:x\]', not 'spot\[:y\]'"):
        resolve_proxy(g, ProxyVariableRef(node.id, 0, "spot[:y]"))
    with pytest.raises(ModelError, match="no edge with id"):
        resolve_proxy(g, ProxyEdgeRef("nope"))
    with pytest.raises(ModelError, match="cannot take a proxy"):
        to_proxy(42)
    with pytest.raises(ModelError, match="not a proxy reference"):
        resolve_proxy(g, x)
    with pytest.raises(TransportError, match="unknown proxy tag"):
        proxy_from_wire(["z", "abc"])
    with pytest.raises(TransportError, match="not a proxy reference"):
        proxy_to_wire(object())


# -- registry and connections ---------------------------------------------------


def test_registry_basics():
    with WorkerRegistry() as registry:
        assert registry.worker_ids == [1]
        assert registry.spawn_workers(2) == [2, 3]
        assert registry.worker_ids == [1, 2, 3]
        for worker in registry.worker_ids:
            assert 0.0 < registry.ping(worker) < 5.0
        with pytest.raises(ModelError, match="unknown worker id 99"):
            registry.connection(99)
        with pytest.raises(ModelError, match="worker count must be >= 1"):
            registry.spawn_workers(0)
        with pytest.raises(ModelError, match="unknown transport"):
            registry.spawn_workers(1, transport="carrier-pigeon")
        with pytest.raises(ModelError, match="listen spec must be host:port"):
            registry.spawn_workers(1, transport="tcp", listen="bogus")


def test_transcript_pairs_requests_with_replies():
    with WorkerRegistry() as registry:
        g = registry.remote_graph(1, "demo")
        node = g.add_node("spot")
        rvar = node.add_variable("x", VariableBounds(0.0, 4.0))
        before = len(registry.transcript.payloads)
        rvar.set_lower_bound(1.5)
        after = registry.transcript.payloads
        assert len(after) == before + 2
        request = decode_message(after[-2])
        reply = decode_message(after[-1])
        assert request.kind == "set_lower_bound"
        assert reply.kind == "ok"
        assert reply.request_id == request.request_id
        assert rvar.get_bounds() == VariableBounds(1.5, 4.0)
        messages = registry.transcript.messages
        # strict alternation: every request is answered before the next
        for i in range(0, len(messages), 2):
            assert messages[i].kind not in ("ok", "error")
            assert messages[i + 1].kind in ("ok", "error")
            assert messages[i + 1].request_id == messages[i].request_id
        assert registry.transcript.request_count() == len(messages) // 2
        lines = registry.transcript.lines()
        assert all(line[:8] == f"{len(p):08x}"
                   for line, p in zip(lines, after))


def _populate_demo_node(node, n_vars):
    vs = [node.add_variable("v", VariableBounds(0.0, 1.0), (i,))
          for i in range(n_vars)]
    node.add_constraint(sum((1.0 * v for v in vs), start=0.0) <= 2.0)
    node.set_objective(-1.0 * vs[0])
    return vs


def test_batched_program_is_one_request():
    with WorkerRegistry() as registry:
        registry.spawn_workers(1)
        batched = registry.remote_graph(2, "demo")
        program = BuildProgram()
        _populate_demo_node(program.add_node("spot"), 100)
        before = len(registry.transcript.payloads)
        batched.execute(program)
        assert len(registry.transcript.payloads) == before + 2
        assert decode_message(
            registry.transcript.payloads[before]).kind == "run_program"

        percall = registry.remote_graph(2, "demo")
        before = registry.transcript.request_count()
        _populate_demo_node(percall.add_node("spot"), 100)
        assert registry.transcript.request_count() - before >= 100

        assert batched.canonical_dump() == percall.canonical_dump()


def test_program_fetch_returns_remote_refs():
    with WorkerRegistry() as registry:
        g = registry.remote_graph(1, "demo")
        program = BuildProgram()
        node = program.add_node("spot")
        vs = _populate_demo_node(node, 3)
        node.variable("v", (2,))
        node.variable("v", (0,))
        fetched = g.execute(program)
        assert [r.vid.name for r in fetched] == ["spot[:v][2]", "spot[:v][0]"]
        assert fetched[0].get_bounds() == VariableBounds(0.0, 1.0)
        # fetch order is reply order, independent of creation order
        assert fetched[1].vid.index == 0


def test_program_rollback_on_failure():
    with WorkerRegistry() as registry:
        g = registry.remote_graph(1, "demo")
        g.add_node("kept")
        stats = g.stats()
        program = BuildProgram()
        node = program.add_node("spot")
        node.add_variable("x", VariableBounds(0.0, 1.0))
        node.add_variable("x", VariableBounds(0.0, 1.0))  # duplicate: fails
        with pytest.raises(RemoteOperationError,
                           match="instruction 2: .*already exists") as info:
            g.execute(program)
        assert info.value.instruction == 2
        assert g.stats() == stats


def test_program_placeholder_rules():
    program = BuildProgram()
    node = program.add_node("spot")
    x = node.add_variable("x", VariableBounds(0.0, 1.0))
    node.add_constraint((2.0 * x) <= 1.0)  # creation refs are fine
    fetched = node.variable("x")
    with pytest.raises(ModelError, match="cannot appear in program "
                                         "expressions"):
        node.add_constraint((1.0 * fetched) <= 1.0)
    from graphopt import AffineExpr
    stray = AffineExpr({VariableId("@p7", 0, "spot[:x]"): 1.0})
    with pytest.raises(ModelError, match="unknown program slot 7"):
        node.add_constraint(stray <= 1.0)


def test_worker_errors_are_relayed():
    with WorkerRegistry() as registry:
        g = registry.remote_graph(1, "demo")
        node = g.add_node("spot")
        node.add_variable("x", VariableBounds(0.0, 1.0))
        with pytest.raises(RemoteOperationError, match="already exists") \
                as info:
            node.add_variable("x", VariableBounds(0.0, 1.0))
        assert info.value.error_type == "ModelError"
        assert isinstance(info.value, ModelError)
        with pytest.raises(RemoteOperationError, match="unknown operation"):
            registry.connection(1).request("levitate", g.handle, {})
        with pytest.raises(RemoteOperationError, match="unknown graph "
                                                       "handle"):
            registry.connection(1).request("graph_stats", "g999", {})


def test_cross_graph_references_are_rejected():
    with WorkerRegistry() as registry:
        registry.spawn_workers(2)
        a = registry.remote_graph(2, "left")
        b = registry.remote_graph(3, "right")
        xa = a.add_node("anode").add_variable("x", VariableBounds(0.0, 1.0))
        bnode = b.add_node("bnode")
        yb = bnode.add_variable("y", VariableBounds(0.0, 1.0))
        with pytest.raises(RemoteOperationError,
                           match="different graph/worker"):
            bnode.add_constraint((xa + yb) <= 1.0)
        # stale proxy: node of another graph on the same worker
        c = registry.remote_graph(3, "rightmost")
        stale = proxy_to_remote(c, to_proxy(yb.vid))
        with pytest.raises(RemoteOperationError,
                           match="unresolvable node reference"):
            stale.get_bounds()
        foreign = VariableId("deadbeef", 0, "ghost[:x]")
        with pytest.raises(ModelError, match="not created through this "
                                             "coordinator"):
            a.add_link_constraint((1.0 * foreign) <= 1.0)


def test_interworker_edges():
    with WorkerRegistry() as registry:
        registry.spawn_workers(2)
        top = registry.remote_graph(1, "top")
        left = top.add_subgraph(registry.remote_graph(2, "left"))
        right = top.add_subgraph(registry.remote_graph(3, "right"))
        xl = left.add_node("lnode").add_variable("x", VariableBounds(0.0, 1.0))
        xr = right.add_node("rnode").add_variable("x", VariableBounds(0.0, 1.0))
        edge = top.add_link_constraint((xl - xr) <= 0.0)
        assert edge in top.interworker_edges
        assert len(edge.graph_ids) == 2
        assert set(edge.graph_ids) == {left.id, right.id}
        # edges are reused per endpoint set
        again = top.add_interworker_link((xl + xr) <= 2.0)
        assert again is edge
        assert len(edge.link_constraints) == 2
        assert edge.endpoints == tuple(sorted(edge.endpoints))
        with pytest.raises(ModelError, match="must span at least 2"):
            top.add_interworker_link((1.0 * xl) <= 1.0)
        outsider = registry.remote_graph(2, "outsider")
        xo = outsider.add_node("onode").add_variable(
            "x", VariableBounds(0.0, 1.0))
        with pytest.raises(ModelError, match="not in this graph's hierarchy"):
            top.add_interworker_link((xl - xo) <= 0.0)
        # a single-owner link routes to a plain edge on the owning worker
        yl = left.add_node("lnode2").add_variable("y", VariableBounds(0.0, 1.0))
        local_edge = top.add_link_constraint((xl - yl) <= 0.0)
        assert local_edge not in top.interworker_edges
        assert left.stats()["edges"] == 1


def test_remote_subgraph_guards():
    with WorkerRegistry() as registry:
        top = registry.remote_graph(1, "top")
        child = registry.remote_graph(1, "child")
        with pytest.raises(ModelError, match="expected RemoteOptiGraph"):
            top.add_subgraph(OptiGraph("local"))
        with pytest.raises(ModelError, match="cannot contain itself"):
            top.add_subgraph(top)
        top.add_subgraph(child)
        with pytest.raises(ModelError, match="already has a parent"):
            top.add_subgraph(child)
        with pytest.raises(ModelError, match="cannot contain itself"):
            child.add_subgraph(top)
        other = WorkerRegistry()
        try:
            stranger = other.remote_graph(1, "stranger")
            with pytest.raises(ModelError, match="share the parent's "
                                                 "registry"):
                top.add_subgraph(stranger)
        finally:
            other.close()


# -- transport guards ------------------------------------------------------------


class _WrongIdWorker(Worker):
    def handle_payload(self, payload):
        msg = decode_message(payload)
        return encode_message(msg.request_id + 1, "ok", msg.graph_handle, {})


class _WrongKindWorker(Worker):
    def handle_payload(self, payload):
        msg = decode_message(payload)
        return encode_message(msg.request_id, "maybe", msg.graph_handle, {})


def test_connection_validates_replies():
    with pytest.raises(TransportError, match="does not match request id"):
        InProcessConnection(_WrongIdWorker(), 9).request("ping", "", {})
    with pytest.raises(TransportError, match="unexpected reply kind"):
        InProcessConnection(_WrongKindWorker(), 9).request("ping", "", {})


# -- TCP ---------------------------------------------------------------------------


def test_tcp_workers_behave_like_in_process():
    def build(registry):
        registry.spawn_workers(2)
        g = registry.remote_graph(2, "demo")
        program = BuildProgram()
        _populate_demo_node(program.add_node("spot"), 5)
        g.execute(program)
        other = registry.remote_graph(3, "annex")
        onode = other.add_node("corner")
        onode.add_variable("w", VariableBounds(-1.0, 1.0))
        return g.canonical_dump() + other.canonical_dump()

    with WorkerRegistry() as inproc:
        expected = build(inproc)
    with WorkerRegistry() as tcp:
        tcp.spawn_workers = lambda n, **kw: WorkerRegistry.spawn_workers(
            tcp, n, transport="tcp")
        got = build(tcp)
    assert got == expected


def test_external_tcp_worker_lifecycle():
    worker = Worker()
    listener = socket.create_server(("127.0.0.1", 0))
    port = listener.getsockname()[1]
    thread = threading.Thread(target=serve_worker, args=(worker, listener),
                              daemon=True)
    thread.start()
    registry = WorkerRegistry()
    try:
        wid = registry.connect_tcp_worker(f"127.0.0.1:{port}")
        assert wid == 2
        assert 0.0 < registry.ping(wid) < 5.0
        g = registry.remote_graph(wid, "external")
        g.add_node("spot").add_variable("x", VariableBounds(0.0, 1.0))
        assert g.stats()["variables"] == 1
    finally:
        registry.close()
    thread.join(timeout=2.0)
    assert worker.stopping
    assert not thread.is_alive()


def test_tcp_connect_failure():
    probe = socket.create_server(("127.0.0.1", 0))
    port = probe.getsockname()[1]
    probe.close()
    registry = WorkerRegistry()
    try:
        with pytest.raises(TransportError, match="cannot connect"):
            registry.connect_tcp_worker(f"127.0.0.1:{port}")
    finally:
        registry.close()
