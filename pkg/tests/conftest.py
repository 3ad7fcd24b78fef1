from __future__ import annotations

import socket
import threading
from contextlib import contextmanager

import pytest

from swarmcheck.counting import count_traces
from swarmcheck.hive import HiveState, serve
from swarmcheck.lts import Label, Lts, Network, SyncRule
from swarmcheck.protocol import LineChannel


def L(name: str) -> Label:
    return Label(name)


@contextmanager
def hive_session(state: HiveState, drain_timeout: float = 5.0):
    """Serve a hive on an ephemeral loopback port in a background thread.

    Yields a dict holding "port" immediately and "report" after shutdown."""
    ready = threading.Event()
    box: dict = {}

    def note_port(port: int) -> None:
        box["port"] = port
        ready.set()

    def run() -> None:
        box["report"] = serve(
            state, port=0, drain_timeout=drain_timeout, ready_callback=note_port
        )

    thread = threading.Thread(target=run, daemon=True)
    thread.start()
    assert ready.wait(5.0)
    try:
        yield box
    finally:
        state.terminated.set()
        thread.join(10.0)
        assert not thread.is_alive()


def connect(port: int) -> LineChannel:
    return LineChannel(socket.create_connection(("127.0.0.1", port), timeout=5.0))


# A 25-state acyclic "music player" subsystem whose root has four children
# weighing 3, 3, 7, 1 (trace count 14).  Decoding trace 10 walks the range
# sequence [0,14) [6,13) [6,13) [7,13) [7,13) [7,12) [9,12) [9,12) [10,12)
# [10,12) [10,12) [10,11).  Built with scrambled state numbers so the DFS
# renumbering is actually exercised.
_PLAYER_EDGES = [
    (0, "recv_C1_3", 1),
    (0, "recv_C1_1", 5),
    (0, "recv_C1_2", 9),
    (0, "off(C1)", 23),
    (1, "play_1", 2),
    (1, "play_2", 3),
    (1, "play_3", 4),
    (5, "menu_1", 6),
    (5, "menu_2", 7),
    (5, "menu_3", 8),
    (9, "send", 10),
    (10, "mute", 11),
    (10, "fwd", 12),
    (12, "send_ack", 13),
    (13, "recv_D", 14),
    (13, "skip_D", 24),
    (14, "e_a", 15),
    (14, "e_b", 16),
    (14, "e_c", 17),
    (17, "hold", 18),
    (18, "g_a", 19),
    (18, "g_b", 20),
    (20, "step_H", 21),
    (21, "step_I", 22),
    (22, "off_J", 23),
    (22, "on_J", 23),
]


def player_lts(scramble: bool = True) -> Lts:
    if not scramble:
        return Lts(25, 0, [(s, L(a), d) for s, a, d in _PLAYER_EDGES])
    perm = {i: (i * 7 + 3) % 25 for i in range(25)}
    edges = [(perm[s], L(a), perm[d]) for s, a, d in _PLAYER_EDGES]
    return Lts(25, perm[0], edges)


@pytest.fixture(scope="session")
def player():
    """The weighted 25-state subsystem (total trace count 14)."""
    return count_traces(player_lts())


def chain_lts(length: int, prefix: str) -> Lts:
    """A linear chain of `length` transitions."""
    edges = [(i, L(f"{prefix}{i}"), i + 1) for i in range(length)]
    return Lts(length + 1, 0, edges)


def single_state_lts() -> Lts:
    return Lts(1, 0, [])


def sync_pair_net() -> Network:
    """Two 2-state components with one rule (send_x, recv_x -> comm)."""
    sender = Lts(2, 0, [(0, L("send_x"), 1)])
    receiver = Lts(2, 0, [(0, L("recv_x"), 1)])
    return Network([sender, receiver], [SyncRule(L("send_x"), L("recv_x"), L("comm"))])
