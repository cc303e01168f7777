"""Command-line entry points: worked-model runs, a worker daemon, and a
protocol capture tool.

Exit codes: 0 optimal/converged, 2 solved but not optimal (infeasible,
unbounded, or iteration limit), 3 modeling/structure error, 4 transport
error, 64 usage error.
"""

from __future__ import annotations

import argparse
import os
import socket
import sys
from typing import List, Optional

from .benders import BendersConfig, run_benders
from .expr import ModelError, VariableBounds
from .graph import OptiGraph, dump_graph
from .models import (
    CemParams,
    StorageParams,
    build_storage_local,
    build_storage_remote,
    build_toy_cem_local,
    build_toy_cem_remote,
    generate_cem_data,
)
from .remote.rgraph import BuildProgram, RemoteOptiGraph
from .remote.transport import TransportError, Worker, WorkerRegistry, serve_worker

_USAGE_EXIT = 64
_DEFAULT_WORKERS = 3


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit with code 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(_USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _env_workers() -> int:
    raw = os.environ.get("GRAPHOPT_WORKERS")
    if raw is None:
        return _DEFAULT_WORKERS
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
        return n
    except ValueError:
        print(f"warning: ignoring invalid GRAPHOPT_WORKERS={raw!r}",
              file=sys.stderr)
        return _DEFAULT_WORKERS


def _listen_addr(value: str):
    host, sep, port = value.rpartition(":")
    if not sep or not host:
        raise argparse.ArgumentTypeError(
            f"expected HOST:PORT, got {value!r}")
    try:
        return host, int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid port in {value!r}")


def _add_solve_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", default="monolithic",
                   choices=["monolithic", "benders", "benders-remote"],
                   help="solve the flattened problem directly, decompose "
                        "in-process, or decompose across remote workers")
    p.add_argument("--workers", type=int, default=None, metavar="N",
                   help="worker count for benders-remote (default: "
                        "$GRAPHOPT_WORKERS or 3)")
    p.add_argument("--transport", default="inproc",
                   choices=["inproc", "tcp"],
                   help="worker transport for benders-remote")
    p.add_argument("--gap", type=float, default=1e-3, metavar="G",
                   help="relative convergence gap for benders modes")
    p.add_argument("--trace", metavar="FILE",
                   help="write the per-iteration convergence trace CSV "
                        "(benders modes only)")
    p.add_argument("--dump", metavar="FILE",
                   help="write the canonical graph dump text")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="graphopt",
                     description="Graph-structured optimization runner.")
    sub = parser.add_subparsers(dest="command", required=True)

    storage = sub.add_parser("storage", help="storage sizing/inventory model")
    storage_sub = storage.add_subparsers(dest="action", required=True)
    storage_solve = storage_sub.add_parser(
        "solve", help="build and solve the storage model")
    storage_solve.add_argument("--periods", type=int, default=20, metavar="T",
                               help="number of operating periods")
    _add_solve_flags(storage_solve)

    cem = sub.add_parser("cem", help="toy capacity-expansion model")
    cem_sub = cem.add_subparsers(dest="action", required=True)
    cem_solve = cem_sub.add_parser(
        "solve", help="generate and solve a capacity-expansion instance")
    cem_solve.add_argument("--zones", type=int, default=3, metavar="Z")
    cem_solve.add_argument("--weeks", type=int, default=8, metavar="W")
    cem_solve.add_argument("--techs", type=int, default=3, metavar="K")
    cem_solve.add_argument("--integer", action="store_true",
                           help="make build variables integer")
    cem_solve.add_argument("--seed", type=int, default=0, metavar="S",
                           help="instance generation seed")
    _add_solve_flags(cem_solve)

    worker = sub.add_parser("worker", help="run a worker daemon")
    worker.add_argument("--listen", type=_listen_addr, default=("127.0.0.1", 0),
                        metavar="ADDR",
                        help="HOST:PORT to listen on (port 0 picks a free "
                             "port; default 127.0.0.1:0)")

    proto = sub.add_parser("protocol-dump",
                           help="run a scripted worker exchange and capture "
                                "the wire transcript")
    proto.add_argument("--capture", required=True, metavar="FILE",
                       help="file to write transcript lines to")
    return parser


# -- solve runners -----------------------------------------------------------


def _print_kv(key: str, value) -> None:
    if isinstance(value, float):
        value = repr(value)
    print(f"{key}: {value}")


def _write_dump(path: str, g) -> None:
    text = g.canonical_dump() if isinstance(g, RemoteOptiGraph) \
        else dump_graph(g)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _solve_monolithic(model: str, g: OptiGraph, args) -> int:
    from .solve import solve_problem

    prob = g.flatten()
    res = solve_problem(prob)
    _print_kv("model", model)
    _print_kv("mode", "monolithic")
    _print_kv("status", res.status)
    if res.objective is not None:
        _print_kv("objective", float(res.objective))
    _print_kv("variables", len(prob.variable_order))
    _print_kv("rows", len(prob.rows))
    _print_kv("iterations", res.iterations)
    if args.dump:
        _write_dump(args.dump, g)
    return 0 if res.status == "optimal" else 2


def _solve_benders(model: str, g, root, args) -> int:
    state = run_benders(g, root, BendersConfig(rel_gap=args.gap))
    _print_kv("model", model)
    _print_kv("mode", args.mode)
    _print_kv("status", state.status)
    _print_kv("objective", float(state.objective))
    _print_kv("iterations", state.iterations)
    _print_kv("rel_gap", float(state.rel_gap))
    _print_kv("lower_bound", float(state.lower_bounds[-1]))
    _print_kv("upper_bound", float(state.upper_bounds[-1]))
    if args.trace:
        state.write_trace(args.trace)
    if args.dump:
        _write_dump(args.dump, g)
    return 0 if state.status == "converged" else 2


def _run_solve(model: str, args, build_local, build_remote) -> int:
    if args.trace and args.mode == "monolithic":
        return _usage_error("--trace requires a benders mode")
    if args.mode == "monolithic":
        g, _ = build_local()
        return _solve_monolithic(model, g, args)
    if args.mode == "benders":
        g, root = build_local()
        return _solve_benders(model, g, root, args)
    workers = args.workers if args.workers is not None else _env_workers()
    transport = "tcp" if args.transport == "tcp" else "in_process"
    with WorkerRegistry() as registry:
        registry.spawn_workers(workers, transport=transport)
        g, root = build_remote(registry)
        return _solve_benders(model, g, root, args)


def _usage_error(message: str) -> int:
    print(f"graphopt: error: {message}", file=sys.stderr)
    return _USAGE_EXIT


def _cmd_storage(args) -> int:
    params = StorageParams(T=args.periods)
    return _run_solve(
        "storage", args,
        lambda: build_storage_local(params),
        lambda registry: build_storage_remote(registry, params))


def _cmd_cem(args) -> int:
    data = generate_cem_data(CemParams(
        zones=args.zones, weeks=args.weeks, techs=args.techs,
        integer_builds=args.integer, seed=args.seed))
    return _run_solve(
        "cem", args,
        lambda: build_toy_cem_local(data),
        lambda registry: build_toy_cem_remote(registry, data))


# -- worker daemon and protocol capture ---------------------------------------


def _cmd_worker(args) -> int:
    host, port = args.listen
    listener = socket.create_server((host, port))
    bound = listener.getsockname()
    print(f"listening on {bound[0]}:{bound[1]}", flush=True)
    try:
        serve_worker(Worker(), listener)
    except KeyboardInterrupt:
        pass
    finally:
        listener.close()
    return 0


def _cmd_protocol_dump(args) -> int:
    """Drive a short scripted exchange and save every frame exchanged."""
    with WorkerRegistry() as registry:
        registry.spawn_workers(2)
        g = registry.remote_graph(2, "demo")
        node = g.add_node("demo_node")
        x = node.add_variable("x", VariableBounds(0.0, 10.0))
        y = node.add_variable("y", VariableBounds(0.0, 10.0))
        node.add_constraint((x + y) <= 8.0)
        node.set_objective(-1.0 * x - 0.5 * y)

        sub = g.add_subgraph(registry.remote_graph(3, "demo_sub"))
        program = BuildProgram()
        pnode = program.add_node("batch_node")
        vs = [pnode.add_variable("v", VariableBounds(0.0, 1.0), (i,))
              for i in range(3)]
        pnode.add_constraint(
            sum((1.0 * v for v in vs), start=0.0) <= 2.0)
        pnode.variable("v", (0,))
        (v0,) = sub.execute(program)

        g.add_link_constraint((x - v0) <= 9.0)  # spans both workers
        registry.ping(2)
        registry.ping(3)
        g.canonical_dump()
        transcript = registry.transcript
    transcript.save(args.capture)
    print(f"captured {len(transcript.payloads)} frames "
          f"({transcript.request_count()} requests) to {args.capture}")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "storage":
            return _cmd_storage(args)
        if args.command == "cem":
            return _cmd_cem(args)
        if args.command == "worker":
            return _cmd_worker(args)
        return _cmd_protocol_dump(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except TransportError as exc:
        print(f"graphopt: transport error: {exc}", file=sys.stderr)
        return 4
    except ModelError as exc:
        print(f"graphopt: model error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
