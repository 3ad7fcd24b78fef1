"""Wire protocol between the hive and its workers.

LF-terminated UTF-8 lines over a stream socket, one request one response:

    worker -> hive   HELLO 1 | GET | BYE
                     FEEDBACK <trace_id> <reached> <consumed:0|1>
                       then <reached> lines  FB <i> <label> ...
                       then END
                     BUG <trace_id> <label> ...
    hive -> worker   HI 1 | ACK | ERR <text>
                     TRACE <trace_id> <n> <label_1> ... <label_n>
                     RETRY <millis>
                     TERMINATE <complete|bug>

Labels never contain whitespace or quotes, so plain splitting is exact.
Single lines are capped at 1 MiB; FEEDBACK is the one framed multi-line block.
"""

from __future__ import annotations

import socket
from typing import Optional

from .lts import Label
from .search import FeedbackVector

__all__ = [
    "PROTOCOL_VERSION",
    "MAX_LINE",
    "WireError",
    "LineChannel",
    "format_trace",
    "parse_trace",
    "format_feedback",
    "read_feedback_block",
]

PROTOCOL_VERSION = 1
MAX_LINE = 1 << 20


class WireError(Exception):
    """Malformed traffic on the wire."""


class LineChannel:
    """A line-oriented wrapper over a connected socket."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._buf = b""

    def send_line(self, line: str) -> None:
        self.sock.sendall(line.encode("utf-8") + b"\n")

    def send_lines(self, lines) -> None:
        self.sock.sendall("".join(line + "\n" for line in lines).encode("utf-8"))

    def recv_line(self) -> Optional[str]:
        """Next line without its LF, or None when the peer closed."""
        while True:
            nl = self._buf.find(b"\n")
            if nl >= 0:
                line, self._buf = self._buf[:nl], self._buf[nl + 1 :]
                return line.decode("utf-8", errors="replace")
            if len(self._buf) > MAX_LINE:
                raise WireError("line exceeds the 1 MiB cap")
            chunk = self.sock.recv(65536)
            if not chunk:
                if self._buf:
                    raise WireError("connection closed mid-line")
                return None
            self._buf += chunk

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def format_trace(trace_id: int, actions) -> str:
    parts = [str(trace_id), str(len(actions))]
    parts.extend(lab.name for lab in actions)
    return "TRACE " + " ".join(parts)


def parse_trace(line: str) -> tuple[int, tuple[Label, ...]]:
    parts = line.split()
    if len(parts) < 3 or parts[0] != "TRACE":
        raise WireError(f"bad TRACE line {line!r}")
    trace_id, n = int(parts[1]), int(parts[2])
    labels = parts[3:]
    if len(labels) != n:
        raise WireError(f"TRACE declares {n} actions, carries {len(labels)}")
    return trace_id, tuple(Label(name) for name in labels)


def format_feedback(trace_id: int, fb: FeedbackVector) -> list[str]:
    lines = [f"FEEDBACK {trace_id} {fb.reached} {1 if fb.consumed_fully else 0}"]
    for i, fset in enumerate(fb.sets):
        names = " ".join(sorted(lab.name for lab in fset))
        lines.append(f"FB {i} {names}".rstrip())
    lines.append("END")
    return lines


def read_feedback_block(header_parts: list[str], channel: LineChannel) -> tuple[int, FeedbackVector]:
    """Parse a FEEDBACK block given the already-split header line."""
    if len(header_parts) != 4:
        raise WireError("FEEDBACK wants: trace_id reached consumed")
    try:
        trace_id, reached, consumed = (int(p) for p in header_parts[1:])
    except ValueError as exc:
        raise WireError(f"bad FEEDBACK header: {exc}") from None
    if reached < 0 or consumed not in (0, 1):
        raise WireError("bad FEEDBACK header values")
    sets: list[frozenset] = []
    for expect in range(reached):
        line = channel.recv_line()
        if line is None:
            raise WireError("connection closed inside FEEDBACK block")
        parts = line.split()
        if not parts or parts[0] != "FB" or len(parts) < 2 or parts[1] != str(expect):
            raise WireError(f"expected 'FB {expect} ...', got {line!r}")
        sets.append(frozenset(Label(name) for name in parts[2:]))
    line = channel.recv_line()
    if line != "END":
        raise WireError(f"FEEDBACK block not closed with END, got {line!r}")
    return trace_id, FeedbackVector(tuple(sets), bool(consumed))
