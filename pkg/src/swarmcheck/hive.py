"""The hive: trace selection, feedback pruning, and the TCP service.

All ledger, lease, and flag mutations happen inside one lock held per
request.  The weighted LTS and network tables are immutable and read by all
handler threads without locking.  The hive answers requests until the ledger
covers [0, tc(init)) or a bug arrives, then drains in-flight workers with
TERMINATE and stops.
"""

from __future__ import annotations

import logging
import random
import socketserver
import threading
import time
from dataclasses import dataclass
from typing import Optional

from .codec import SwarmTrace, child_ranges, decode, to_swarm
from .counting import WeightedLts
from .lts import Label, Network, relabel
from .protocol import (
    PROTOCOL_VERSION,
    LineChannel,
    WireError,
    format_trace,
    read_feedback_block,
)
from .ranges import LeaseTable, TraceRangeList, pick_unexplored
from .search import FeedbackVector

__all__ = ["HiveState", "HiveServer", "serve"]

log = logging.getLogger(__name__)

DEFAULT_RETRY_MILLIS = 200
MIN_LEASE_TIMEOUT = 60.0


@dataclass
class RunInfo:
    trace_id: int
    worker_id: str
    duration: float


@dataclass
class BugRecord:
    trace_id: int
    witness: tuple[Label, ...]
    late: bool = False


class HiveState:
    """Shared coordinator state; callers hold no lock, methods take it."""

    def __init__(
        self,
        weighted: WeightedLts,
        net: Network,
        *,
        seed: int = 0,
        feedback_batch: int = 1,
        lease_timeout: Optional[float] = None,
        ledger: Optional[TraceRangeList] = None,
    ):
        self.weighted = weighted
        self.net = net
        self.seed = seed
        self.rng = random.Random(seed)
        self.ledger = ledger if ledger is not None else TraceRangeList(weighted.total)
        if self.ledger.total != weighted.total:
            raise ValueError("ledger total does not match the subsystem trace count")
        self.leases = LeaseTable()
        self.feedback_batch = max(1, feedback_batch)
        self.lease_timeout = lease_timeout  # None = adaptive
        self.lock = threading.Lock()
        self.terminated = threading.Event()
        self.terminate_reason: Optional[str] = None
        self.started_at = time.monotonic()
        self.runs: list[RunInfo] = []
        self.bugs: list[BugRecord] = []
        self.pruned: list[tuple[int, int]] = []
        self.progress: list[tuple[float, int]] = []
        self.longest_run = 0.0
        self._queue: list[tuple[int, FeedbackVector, str]] = []
        self._lease_issue: dict[int, float] = {}
        if self.ledger.is_complete():
            self._terminate("complete")

    # -- F1: trace selection ------------------------------------------------

    def select_trace(self, worker_id: str):
        """Returns ("trace", SwarmTrace) | ("retry", millis) | ("terminate", reason)."""
        with self.lock:
            if self.terminate_reason is not None:
                return ("terminate", self.terminate_reason)
            self._expire_leases()
            trace_id = pick_unexplored(self.ledger, self.leases, self.rng, worker_id)
            if trace_id is None and self._queue:
                # starvation with results pending: flush the batch and retry
                self._apply_queued()
                if self.terminate_reason is not None:
                    return ("terminate", self.terminate_reason)
                trace_id = pick_unexplored(self.ledger, self.leases, self.rng, worker_id)
            if trace_id is None:
                if self.ledger.is_complete():
                    self._terminate("complete")
                    return ("terminate", "complete")
                return ("retry", DEFAULT_RETRY_MILLIS)
            self._lease_issue[trace_id] = time.monotonic()
            sub_trace = decode(self.weighted, trace_id)
            swarm = to_swarm(self.net, self.weighted, sub_trace, trace_id)
            return ("trace", swarm)

    # -- F3: feedback pruning -----------------------------------------------

    def apply_feedback(
        self, trace_id: int, fb: FeedbackVector, worker_id: str = "?"
    ) -> list[tuple[int, int]]:
        """Mark the trace done and prune ranges its feedback proves empty.

        Returns the ranges added to the ledger (the trace's own singleton
        plus one range per pruned sibling subtree)."""
        with self.lock:
            if not 0 <= trace_id < self.ledger.total:
                log.warning("ignoring feedback for unknown trace %s", trace_id)
                return []
            issued = self._lease_issue.pop(trace_id, None)
            duration = time.monotonic() - issued if issued is not None else 0.0
            self.longest_run = max(self.longest_run, duration)
            self.runs.append(RunInfo(trace_id, worker_id, duration))
            # the lease stays until the queued feedback is applied, so the
            # number cannot be re-issued while batching delays the ledger
            self._queue.append((trace_id, fb, worker_id))
            if len(self._queue) >= self.feedback_batch or self.terminate_reason:
                return self._apply_queued()
            return []

    def _apply_queued(self) -> list[tuple[int, int]]:
        added: list[tuple[int, int]] = []
        for trace_id, fb, _worker in self._queue:
            added.extend(self._apply_one(trace_id, fb))
        self._queue.clear()
        if added:
            self.leases.drop_covered(self.ledger)
            self.progress.append(
                (time.monotonic() - self.started_at, self.ledger.covered())
            )
        if self.ledger.is_complete() and self.terminate_reason is None:
            self._terminate("complete")
        return added

    def _apply_one(self, trace_id: int, fb: FeedbackVector) -> list[tuple[int, int]]:
        self.leases.release(trace_id)
        added = [(trace_id, trace_id + 1)]
        self.ledger.add(trace_id, trace_id + 1)
        trace = decode(self.weighted, trace_id)
        base = 0
        state = trace.path[0]
        for i in range(fb.reached):
            if i >= len(trace.labels):
                break  # feedback past the final state: nothing below to prune
            taken = trace.labels[i]
            next_base = base
            observed = fb.sets[i]
            fired = i < fb.reached - 1 or fb.consumed_fully
            for lab, _child, lo, hi in child_ranges(self.weighted, state, base):
                if lab is taken:
                    next_base = lo
                    if not fired and (lo, hi) not in added:
                        # the unfired step's whole subtree, trace included
                        added.append((lo, hi))
                        self.ledger.add(lo, hi)
                        self.pruned.append((lo, hi))
                if relabel(self.net, lab) not in observed:
                    if (lo, hi) not in added:
                        added.append((lo, hi))
                        self.ledger.add(lo, hi)
                        self.pruned.append((lo, hi))
            base = next_base
            state = trace.path[i + 1]
        return added

    # -- bug handling ---------------------------------------------------------

    def report_bug(self, trace_id: int, witness) -> None:
        with self.lock:
            late = self.terminate_reason is not None
            self.bugs.append(BugRecord(trace_id, tuple(witness), late))
            if late:
                log.info("late bug report for trace %s", trace_id)
            else:
                self._terminate("bug")
            self.leases.release(trace_id)
            self._lease_issue.pop(trace_id, None)

    # -- internals ------------------------------------------------------------

    def _terminate(self, reason: str) -> None:
        if self.terminate_reason is None:
            self.terminate_reason = reason
        self.terminated.set()

    def _expire_leases(self) -> None:
        timeout = self.lease_timeout
        if timeout is None:
            timeout = max(MIN_LEASE_TIMEOUT, 10.0 * self.longest_run)
        expired = self.leases.purge_expired(timeout)
        for trace_id in expired:
            self._lease_issue.pop(trace_id, None)
            log.info("lease on trace %s expired, number selectable again", trace_id)

    def build_report(self) -> dict:
        """Hive-side run report; state counts live in the worker run logs and
        get merged in by the consolidated report."""
        with self.lock:
            durations = [r.duration for r in self.runs]
            return {
                "seed": self.seed,
                "est_runs": self.weighted.total,
                "runs": len(self.runs),
                "max_states": None,
                "total_states": None,
                "max_time_s": round(max(durations), 6) if durations else 0.0,
                "total_time_s": round(sum(durations), 6),
                "wall_time_s": round(time.monotonic() - self.started_at, 6),
                "termination": self.terminate_reason,
                "bugs": [
                    {
                        "trace_id": b.trace_id,
                        "witness": [lab.name for lab in b.witness],
                        "late": b.late,
                    }
                    for b in self.bugs
                ],
                "per_run": [
                    {
                        "trace_id": r.trace_id,
                        "worker": r.worker_id,
                        "duration": round(r.duration, 6),
                    }
                    for r in self.runs
                ],
                "pruned_ranges": [list(r) for r in self.pruned],
                "ledger": [list(r) for r in self.ledger.ranges()],
                "covered_progress": [[round(t, 6), c] for t, c in self.progress],
            }


class _Handler(socketserver.BaseRequestHandler):
    def setup(self):
        try:
            peer = self.request.getpeername()
            self.worker_id = f"{peer[0]}:{peer[1]}"
        except OSError:
            self.worker_id = "unknown"
        self.request.settimeout(self.server.idle_timeout)
        self.channel = LineChannel(self.request)
        self.server.track_connection(+1)

    def finish(self):
        self.server.track_connection(-1)

    def handle(self):
        state: HiveState = self.server.hive_state
        chan = self.channel
        try:
            while True:
                line = chan.recv_line()
                if line is None:
                    return
                parts = line.split()
                if not parts:
                    chan.send_line("ERR empty request")
                    return
                verb = parts[0]
                if verb == "HELLO":
                    if parts[1:] != [str(PROTOCOL_VERSION)]:
                        chan.send_line(f"ERR unsupported protocol {line!r}")
                        return
                    chan.send_line(f"HI {PROTOCOL_VERSION}")
                elif verb == "GET" and len(parts) == 1:
                    kind, payload = state.select_trace(self.worker_id)
                    if kind == "trace":
                        chan.send_line(format_trace(payload.trace_id, payload.actions))
                    elif kind == "retry":
                        chan.send_line(f"RETRY {payload}")
                    else:
                        chan.send_line(f"TERMINATE {payload}")
                elif verb == "FEEDBACK":
                    trace_id, fb = read_feedback_block(parts, chan)
                    if not 0 <= trace_id < state.ledger.total:
                        log.warning("feedback for unknown trace %s", trace_id)
                        chan.send_line("ERR unknown trace id")
                        continue
                    state.apply_feedback(trace_id, fb, self.worker_id)
                    chan.send_line("ACK")
                elif verb == "BUG":
                    if len(parts) < 2:
                        chan.send_line("ERR BUG wants a trace id")
                        return
                    trace_id = int(parts[1])
                    witness = tuple(Label(name) for name in parts[2:])
                    state.report_bug(trace_id, witness)
                    chan.send_line("ACK")
                elif verb == "BYE" and len(parts) == 1:
                    return
                else:
                    chan.send_line(f"ERR unknown request {line!r}")
                    return
        except (WireError, ValueError) as exc:
            try:
                chan.send_line(f"ERR {exc}")
            except OSError:
                pass
        except OSError:
            pass


class HiveServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, state: HiveState, idle_timeout: float = 60.0):
        self.hive_state = state
        self.active_connections = 0
        self.idle_timeout = idle_timeout
        self._conn_lock = threading.Lock()
        super().__init__(address, _Handler)

    def track_connection(self, delta: int) -> None:
        with self._conn_lock:
            self.active_connections += delta

    @property
    def port(self) -> int:
        return self.server_address[1]


def serve(
    state: HiveState,
    host: str = "127.0.0.1",
    port: int = 0,
    *,
    drain_timeout: float = 15.0,
    ready_callback=None,
) -> dict:
    """Run the hive service until termination; returns the run report.

    After the terminate flag fires, keeps answering so in-flight workers
    receive TERMINATE, up to `drain_timeout` seconds."""
    server = HiveServer((host, port), state)
    if ready_callback is not None:
        ready_callback(server.port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        state.terminated.wait()
        deadline = time.monotonic() + drain_timeout
        while server.active_connections > 0 and time.monotonic() < deadline:
            time.sleep(0.02)
    finally:
        server.shutdown()
        server.server_close()
    return state.build_report()
