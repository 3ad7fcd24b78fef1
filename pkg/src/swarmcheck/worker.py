"""Worker loop: fetch a trace, search, report, repeat until told to stop.

A worker is stateless between traces apart from cumulative statistics.  It
reads the subsystem alphabet from `<base>.swh`, everything else it needs
arrives over the wire.  If the search blows its state cap the worker simply
asks for new work and lets the lease on the failed number expire elsewhere.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .counting import load_subsystem_alphabet
from .codec import SwarmTrace
from .lts import Network, load_network
from .protocol import PROTOCOL_VERSION, LineChannel, WireError, format_feedback, parse_trace
from .search import (
    ConfigurationError,
    IssResult,
    RestrictionSet,
    StateLimitExceeded,
    run_iss,
)

__all__ = ["WorkerConfig", "WorkerResult", "worker_loop", "ProtocolViolation"]

log = logging.getLogger(__name__)


class ProtocolViolation(RuntimeError):
    pass


@dataclass
class WorkerConfig:
    host: str
    port: int
    manifest: Path
    swarm_base: Path
    worker_id: str = "worker"
    state_cap: Optional[int] = None
    detect_deadlocks: bool = False
    log_path: Optional[Path] = None
    dump_visited: Optional[Path] = None
    max_retries: int = 10
    backoff: float = 0.2
    crash_after_get: Optional[int] = None  # fault-injection: die on the Nth TRACE


@dataclass
class WorkerResult:
    exit_code: int
    runs: int = 0
    total_states: int = 0
    max_states: int = 0
    total_transitions: int = 0
    total_time: float = 0.0
    bugs_found: int = 0
    terminate_reason: Optional[str] = None


class _RunLog:
    def __init__(self, path: Optional[Path], worker_id: str):
        self.worker_id = worker_id
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def write(self, record: dict) -> None:
        record.setdefault("worker", self.worker_id)
        record.setdefault("ts", time.time())
        if self._fh:
            self._fh.write(json.dumps(record) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()


def _connect(cfg: WorkerConfig) -> LineChannel:
    sock = socket.create_connection((cfg.host, cfg.port), timeout=30.0)
    chan = LineChannel(sock)
    chan.send_line(f"HELLO {PROTOCOL_VERSION}")
    reply = chan.recv_line()
    if reply != f"HI {PROTOCOL_VERSION}":
        chan.close()
        raise ProtocolViolation(f"handshake failed, hive said {reply!r}")
    return chan


def _dump_visited(result: IssResult, trace_id: int, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"trace_{trace_id}.states"
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for state in result.visited or ():
            fh.write(",".join(str(s) for s in state) + "\n")


def worker_loop(cfg: WorkerConfig) -> WorkerResult:
    """Drive one worker against a hive until TERMINATE.

    Connection loss drops the in-flight trace (its lease expires at the hive)
    and reconnects with exponential backoff, bounded by cfg.max_retries
    consecutive failures."""
    net = load_network(cfg.manifest)
    restriction = RestrictionSet.from_alphabet(net, load_subsystem_alphabet(cfg.swarm_base))
    result = WorkerResult(exit_code=1)
    run_log = _RunLog(cfg.log_path, cfg.worker_id)
    failures = 0
    traces_received = 0
    chan: Optional[LineChannel] = None
    try:
        while True:
            if chan is None:
                try:
                    chan = _connect(cfg)
                    failures = 0
                except OSError as exc:
                    failures += 1
                    if failures > cfg.max_retries:
                        log.error("giving up after %d connect failures: %s", failures, exc)
                        result.exit_code = 1
                        return result
                    time.sleep(min(5.0, cfg.backoff * (2 ** (failures - 1))))
                    continue
            try:
                chan.send_line("GET")
                reply = chan.recv_line()
                if reply is None:
                    raise OSError("hive closed the connection")
                parts = reply.split()
                if parts and parts[0] == "TRACE":
                    traces_received += 1
                    if cfg.crash_after_get is not None and traces_received >= cfg.crash_after_get:
                        log.warning("fault injection: dying with a leased trace")
                        os._exit(3)
                    trace_id, actions = parse_trace(reply)
                    outcome = _run_one(cfg, net, restriction, trace_id, actions, run_log)
                    if outcome is not None:
                        _report(chan, trace_id, outcome, result)
                elif parts and parts[0] == "RETRY" and len(parts) == 2:
                    time.sleep(int(parts[1]) / 1000.0)
                elif parts and parts[0] == "TERMINATE" and len(parts) == 2:
                    result.terminate_reason = parts[1]
                    result.exit_code = 2 if parts[1] == "bug" else 0
                    run_log.write({"event": "terminate", "reason": parts[1]})
                    try:
                        chan.send_line("BYE")
                    except OSError:
                        pass
                    return result
                elif parts and parts[0] == "ERR":
                    raise ProtocolViolation(f"hive rejected the request: {reply!r}")
                else:
                    raise ProtocolViolation(f"unexpected reply {reply!r}")
            except (OSError, WireError) as exc:
                log.warning("connection trouble (%s); reconnecting", exc)
                chan.close()
                chan = None
                failures += 1
                if failures > cfg.max_retries:
                    result.exit_code = 1
                    return result
                time.sleep(min(5.0, cfg.backoff * (2 ** (failures - 1))))
    except ProtocolViolation as exc:
        log.error("protocol violation: %s", exc)
        result.exit_code = 1
        return result
    except ConfigurationError as exc:
        log.error("configuration error: %s", exc)
        result.exit_code = 1
        return result
    finally:
        if chan is not None:
            chan.close()
        run_log.close()


def _run_one(
    cfg: WorkerConfig,
    net: Network,
    restriction: RestrictionSet,
    trace_id: int,
    actions,
    run_log: _RunLog,
) -> Optional[IssResult]:
    """Run one search; None means the cap was exceeded and nothing is sent."""
    sigma = SwarmTrace(trace_id, actions)
    try:
        iss = run_iss(
            net,
            restriction,
            sigma,
            state_cap=cfg.state_cap,
            detect_deadlocks=cfg.detect_deadlocks,
            retain_visited=cfg.dump_visited is not None,
        )
    except StateLimitExceeded as exc:
        log.warning("trace %d dropped: %s", trace_id, exc)
        run_log.write({"event": "cap-exceeded", "trace_id": trace_id, "cap": exc.cap})
        return None
    if cfg.dump_visited is not None:
        _dump_visited(iss, trace_id, cfg.dump_visited)
    run_log.write(
        {
            "trace_id": trace_id,
            "states": iss.states_explored,
            "transitions": iss.transitions_fired,
            "duration": round(iss.duration, 6),
            "bug": (
                {
                    "kind": iss.bug.kind,
                    "label": iss.bug.label.name if iss.bug.label else None,
                    "witness": [lab.name for lab in iss.bug.witness],
                }
                if iss.bug
                else None
            ),
            "reached": iss.feedback.reached,
            "consumed_fully": iss.feedback.consumed_fully,
        }
    )
    return iss


def _report(chan: LineChannel, trace_id: int, iss: IssResult, result: WorkerResult) -> None:
    result.runs += 1
    result.total_states += iss.states_explored
    result.max_states = max(result.max_states, iss.states_explored)
    result.total_transitions += iss.transitions_fired
    result.total_time += iss.duration
    if iss.bug is not None:
        result.bugs_found += 1
        witness = " ".join(lab.name for lab in iss.bug.witness)
        chan.send_line(f"BUG {trace_id} {witness}".rstrip())
    else:
        chan.send_lines(format_feedback(trace_id, iss.feedback))
    reply = chan.recv_line()
    if reply != "ACK":
        raise ProtocolViolation(f"expected ACK, got {reply!r}")
