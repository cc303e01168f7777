"""Command-line interface: exit codes, output format, and subcommands."""

import argparse
import json
import re
import socket
import subprocess
import sys
import threading

import pytest

from graphopt import (
    CemParams,
    OptiGraph,
    StorageParams,
    VariableBounds,
    build_storage_local,
    build_toy_cem_local,
    dump_graph,
    generate_cem_data,
)
from graphopt.cli import _solve_monolithic, build_parser, main
from graphopt.remote import WorkerRegistry


def parse_kv(out: str) -> dict:
    pairs = {}
    for line in out.strip().splitlines():
        key, _, value = line.partition(": ")
        pairs[key] = value
    return pairs


def run_cli(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, parse_kv(out.out), out.err


# -- usage errors ----------------------------------------------------------------


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 64
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    assert main(["storage", "solve", "--frobnicate"]) == 64
    err = capsys.readouterr().err
    assert "usage" in err and "error" in err


def test_unknown_mode_is_usage_error(capsys):
    assert main(["storage", "solve", "--mode", "telepathy"]) == 64
    capsys.readouterr()


def test_trace_requires_benders_mode(capsys, tmp_path):
    code = main(["storage", "solve", "--periods", "3",
                 "--trace", str(tmp_path / "t.csv")])
    assert code == 64
    assert "--trace requires a benders mode" in capsys.readouterr().err


def test_worker_listen_spec_validation(capsys):
    assert main(["worker", "--listen", "not-an-address"]) == 64
    capsys.readouterr()


# -- storage runs ------------------------------------------------------------------


def test_storage_monolithic_output(capsys):
    code, kv, _ = run_cli(capsys, ["storage", "solve"])
    assert code == 0
    assert kv["model"] == "storage"
    assert kv["mode"] == "monolithic"
    assert kv["status"] == "optimal"
    assert kv["objective"] == "-10700.0"
    assert kv["variables"] == "81"
    assert kv["rows"] == "60"
    assert int(kv["iterations"]) > 0


def test_storage_benders_agrees_with_monolithic(capsys):
    code, mono, _ = run_cli(capsys, ["storage", "solve"])
    assert code == 0
    code, benders, _ = run_cli(capsys, ["storage", "solve",
                                        "--mode", "benders"])
    assert code == 0
    assert benders["status"] == "converged"
    mono_obj = float(mono["objective"])
    rel = abs(float(benders["objective"]) - mono_obj) / abs(mono_obj)
    assert rel <= 1e-3
    assert float(benders["rel_gap"]) <= 1e-3
    assert float(benders["lower_bound"]) <= float(benders["upper_bound"])
    assert int(benders["iterations"]) >= 1


def test_storage_benders_trace(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    code, kv, _ = run_cli(capsys, ["storage", "solve", "--periods", "5",
                                   "--mode", "benders",
                                   "--trace", str(trace)])
    assert code == 0
    lines = trace.read_text().strip().splitlines()
    assert lines[0] == "iteration,wall_seconds,lower_bound,upper_bound,rel_gap"
    assert len(lines) == 1 + int(kv["iterations"])


def test_storage_remote_dump_matches_library(capsys, tmp_path):
    dump = tmp_path / "graph.txt"
    code, kv, _ = run_cli(capsys, ["storage", "solve", "--periods", "6",
                                   "--mode", "benders-remote",
                                   "--workers", "3", "--dump", str(dump)])
    assert code == 0
    assert kv["mode"] == "benders-remote"
    assert kv["status"] == "converged"
    expected, _ = build_storage_local(StorageParams(T=6))
    assert dump.read_text() == dump_graph(expected)


def test_storage_remote_tcp_matches_inproc(capsys):
    argv = ["storage", "solve", "--periods", "6", "--mode", "benders-remote",
            "--workers", "2"]
    code, inproc, _ = run_cli(capsys, argv)
    assert code == 0
    code, tcp, _ = run_cli(capsys, argv + ["--transport", "tcp"])
    assert code == 0
    assert tcp["objective"] == inproc["objective"]
    assert tcp["iterations"] == inproc["iterations"]


def test_storage_remote_too_few_workers(capsys):
    code = main(["storage", "solve", "--periods", "3",
                 "--mode", "benders-remote", "--workers", "1"])
    assert code == 3
    assert "model error" in capsys.readouterr().err


def test_workers_default_from_environment(capsys, monkeypatch):
    monkeypatch.setenv("GRAPHOPT_WORKERS", "1")
    code = main(["storage", "solve", "--periods", "3",
                 "--mode", "benders-remote"])
    assert code == 3  # the env count was honored: 1 worker is too few
    capsys.readouterr()
    monkeypatch.setenv("GRAPHOPT_WORKERS", "2")
    code, kv, _ = run_cli(capsys, ["storage", "solve", "--periods", "3",
                                   "--mode", "benders-remote"])
    assert code == 0
    assert kv["status"] == "converged"


def test_invalid_environment_workers_warns(capsys, monkeypatch):
    monkeypatch.setenv("GRAPHOPT_WORKERS", "several")
    code, kv, err = run_cli(capsys, ["storage", "solve", "--periods", "3",
                                     "--mode", "benders-remote"])
    assert code == 0  # fell back to the default pool size
    assert "ignoring invalid GRAPHOPT_WORKERS" in err
    assert kv["status"] == "converged"


# -- capacity-expansion runs ---------------------------------------------------------


def test_cem_benders_run(capsys):
    code, kv, _ = run_cli(capsys, ["cem", "solve", "--zones", "2",
                                   "--weeks", "2", "--techs", "2",
                                   "--seed", "1", "--mode", "benders"])
    assert code == 0
    assert kv["model"] == "cem"
    assert kv["status"] == "converged"


def test_cem_integer_run(capsys):
    code, kv, _ = run_cli(capsys, ["cem", "solve", "--zones", "2",
                                   "--weeks", "2", "--techs", "2",
                                   "--seed", "1", "--integer",
                                   "--mode", "benders"])
    assert code == 0
    assert kv["status"] == "converged"


def test_cem_dump_matches_library(capsys, tmp_path):
    dump = tmp_path / "cem.txt"
    code, _, _ = run_cli(capsys, ["cem", "solve", "--zones", "2",
                                  "--weeks", "3", "--techs", "2",
                                  "--seed", "5", "--dump", str(dump)])
    assert code == 0
    data = generate_cem_data(CemParams(zones=2, weeks=3, techs=2, seed=5))
    expected, _ = build_toy_cem_local(data)
    assert dump.read_text() == dump_graph(expected)


# -- status-to-exit-code mapping ------------------------------------------------------


def test_nonoptimal_status_exits_two(capsys):
    g = OptiGraph("impossible")
    node = g.add_node("spot")
    x = node.add_variable("x", VariableBounds(0.0, 1.0))
    node.add_constraint((1.0 * x) >= 2.0)
    code = _solve_monolithic("impossible", g, argparse.Namespace(dump=None))
    assert code == 2
    kv = parse_kv(capsys.readouterr().out)
    assert kv["status"] == "infeasible"
    assert "objective" not in kv


# -- protocol capture ------------------------------------------------------------------


def test_protocol_dump_capture(capsys, tmp_path):
    capture = tmp_path / "frames.log"
    assert main(["protocol-dump", "--capture", str(capture)]) == 0
    stdout = capsys.readouterr().out
    match = re.fullmatch(r"captured (\d+) frames \((\d+) requests\) to (.*)\n",
                         stdout)
    assert match is not None
    n_frames, n_requests = int(match.group(1)), int(match.group(2))
    lines = capture.read_text().strip().splitlines()
    assert len(lines) == n_frames
    assert n_requests == n_frames // 2
    messages = []
    for line in lines:
        assert re.fullmatch(r"[0-9a-f]{8} \{.*\}", line)
        assert int(line[:8], 16) == len(line[9:].encode("utf-8"))
        messages.append(json.loads(line[9:]))
    for i in range(0, len(messages), 2):
        request, reply = messages[i], messages[i + 1]
        assert request["kind"] not in ("ok", "error")
        assert reply["kind"] in ("ok", "error")
        assert reply["request_id"] == request["request_id"]
    kinds = {m["kind"] for m in messages}
    # the cross-worker link stays on the coordinator, so no add_link frame
    assert {"new_graph", "add_node", "add_variable", "add_constraint",
            "set_objective", "run_program", "ping", "dump_graph",
            "shutdown"} <= kinds
    assert "add_link" not in kinds


# -- worker daemon ----------------------------------------------------------------------


def test_worker_daemon_lifecycle():
    proc = subprocess.Popen(
        [sys.executable, "-m", "graphopt.cli", "worker",
         "--listen", "127.0.0.1:0"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    try:
        banner = proc.stdout.readline().strip()
        match = re.fullmatch(r"listening on (\S+):(\d+)", banner)
        assert match is not None
        address = f"{match.group(1)}:{match.group(2)}"
        with WorkerRegistry() as registry:
            wid = registry.connect_tcp_worker(address)
            assert 0.0 < registry.ping(wid) < 5.0
            g = registry.remote_graph(wid, "external")
            g.add_node("spot").add_variable("x", VariableBounds(0.0, 1.0))
            assert g.stats()["variables"] == 1
        # registry shutdown stops the daemon cleanly
        assert proc.wait(timeout=10) == 0
    finally:
        if proc.poll() is None:
            proc.kill()
        proc.wait(timeout=10)


def test_console_script_entrypoint():
    result = subprocess.run(
        ["graphopt", "storage", "solve", "--periods", "2"],
        capture_output=True, text=True)
    assert result.returncode == 0
    assert parse_kv(result.stdout)["status"] == "optimal"
