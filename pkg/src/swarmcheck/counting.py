"""Preprocessing of the driver subsystem: DFS numbering and trace counts.

The weight tc(s) of a state is the number of maximal traces leaving it:
1 for a deadlock, otherwise the sum of the target weights over all outgoing
edges (two edges with different labels into the same target count twice;
they carry distinct traces).  Weights are exact big integers.  States are
renumbered in DFS discovery order and each adjacency list is re-sorted by
target number, which is what makes trace numbers decodable.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from .lts import Label, Lts

__all__ = [
    "WeightedLts",
    "CycleError",
    "WeightedFileError",
    "count_traces",
    "save_weighted",
    "load_weighted",
]


class CycleError(ValueError):
    """The subsystem has a cycle and no depth bound was given."""

    def __init__(self, cycle: list[int]):
        self.cycle = cycle
        super().__init__(
            "subsystem has a cycle through states "
            + " -> ".join(str(s) for s in cycle)
            + "; rerun with a depth bound to cut traces at a fixed length"
        )


class WeightedFileError(ValueError):
    """Weighted-LTS files are missing or mutually inconsistent."""


class WeightedLts:
    """A DFS-renumbered subsystem LTS together with its trace counts.

    `lts` has state 0 as the initial state and children sorted ascending by
    state number; `tc[s]` is the trace count of state s.  `depth_bound` is
    set when the system was unrolled to bounded depth (states then stand for
    (original state, remaining budget) pairs).
    """

    __slots__ = ("lts", "tc", "depth_bound")

    def __init__(self, lts: Lts, tc: tuple[int, ...], depth_bound: Optional[int] = None):
        self.lts = lts
        self.tc = tc
        self.depth_bound = depth_bound

    @property
    def total(self) -> int:
        return self.tc[self.lts.initial]

    def children(self, state: int) -> list[tuple[Label, int]]:
        return self.lts.adj[state]

    def __repr__(self) -> str:
        bound = f", depth_bound={self.depth_bound}" if self.depth_bound else ""
        return f"WeightedLts(states={self.lts.n_states}, total={self.total}{bound})"


def count_traces(sub: Lts, depth_bound: Optional[int] = None) -> WeightedLts:
    """Explore `sub` depth-first and build its WeightedLts.

    Without a bound the reachable part must be acyclic (CycleError otherwise).
    With a bound of n, traces are cut after n transitions and cut points count
    as deadlocks; a state met with different remaining budgets is counted per
    (state, budget) pair, so the result is the bounded unrolling.
    """
    if depth_bound is not None:
        if depth_bound < 1:
            raise ValueError("depth bound must be positive")
        return _count_bounded(sub, depth_bound)
    return _count_acyclic(sub)


def _count_acyclic(sub: Lts) -> WeightedLts:
    order: dict[int, int] = {}  # original state -> DFS number
    tc: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[tuple[int, int]] = [(sub.initial, 0)]  # (state, next edge index)
    order[sub.initial] = 0
    on_stack.add(sub.initial)
    path = [sub.initial]
    while stack:
        state, edge_idx = stack[-1]
        edges = sub.adj[state]
        if edge_idx < len(edges):
            stack[-1] = (state, edge_idx + 1)
            child = edges[edge_idx][1]
            if child in on_stack:
                cycle = path[path.index(child):] + [child]
                raise CycleError(cycle)
            if child not in order:
                order[child] = len(order)
                on_stack.add(child)
                path.append(child)
                stack.append((child, 0))
        else:
            tc[state] = sum(tc[dst] for _, dst in edges) if edges else 1
            on_stack.discard(state)
            path.pop()
            stack.pop()
    return _renumber(sub, order, tc)


def _count_bounded(sub: Lts, bound: int) -> WeightedLts:
    """Unroll over (state, remaining budget) nodes; budget 0 is a cut leaf."""
    root = (sub.initial, bound)
    order: dict[tuple[int, int], int] = {root: 0}
    tc: dict[tuple[int, int], int] = {}
    stack: list[tuple[tuple[int, int], int]] = [(root, 0)]
    while stack:
        node, edge_idx = stack[-1]
        state, budget = node
        edges = sub.adj[state] if budget > 0 else []
        if edge_idx < len(edges):
            stack[-1] = (node, edge_idx + 1)
            child = (edges[edge_idx][1], budget - 1)
            if child not in order:
                order[child] = len(order)
                stack.append((child, 0))
        else:
            tc[node] = sum(tc[(dst, budget - 1)] for _, dst in edges) if edges else 1
            stack.pop()
    n = len(order)
    transitions = []
    for (state, budget), num in order.items():
        if budget > 0:
            for lab, dst in sub.adj[state]:
                transitions.append((num, lab, order[(dst, budget - 1)]))
    weights = [0] * n
    for node, num in order.items():
        weights[num] = tc[node]
    lts = _build_sorted(n, transitions, sub.labels)
    return WeightedLts(lts, tuple(weights), depth_bound=bound)


def _renumber(sub: Lts, order: dict[int, int], tc: dict[int, int]) -> WeightedLts:
    n = len(order)
    transitions = [
        (order[src], lab, order[dst])
        for src, lab, dst in sub.transitions()
        if src in order
    ]
    weights = [0] * n
    for state, num in order.items():
        weights[num] = tc[state]
    lts = _build_sorted(n, transitions, sub.labels)
    return WeightedLts(lts, tuple(weights))


def _build_sorted(n: int, transitions, labels) -> Lts:
    lts = Lts(n, 0, transitions, labels=labels)
    for edges in lts.adj:
        edges.sort(key=lambda e: e[1])  # stable: ties keep insertion order
    return lts


def save_weighted(w: WeightedLts, base) -> None:
    """Write `<base>.swh` (alphabet), `<base>.swc` (transitions as
    `src labelID dst`), and `<base>.sww` (line k = tc of state k)."""
    base = Path(base)
    label_id = {lab: i for i, lab in enumerate(w.lts.labels)}
    with open(f"{base}.swh", "w", encoding="utf-8", newline="\n") as fh:
        for lab in w.lts.labels:
            fh.write(lab.name + "\n")
    with open(f"{base}.swc", "w", encoding="utf-8", newline="\n") as fh:
        for src in range(w.lts.n_states):
            for lab, dst in w.lts.adj[src]:
                fh.write(f"{src} {label_id[lab]} {dst}\n")
    with open(f"{base}.sww", "w", encoding="utf-8", newline="\n") as fh:
        for weight in w.tc:
            fh.write(f"{weight}\n")


def load_subsystem_alphabet(base) -> tuple[Label, ...]:
    """Read just `<base>.swh` (all a worker needs from the preprocessing)."""
    path = Path(f"{base}.swh")
    if not path.exists():
        raise WeightedFileError(f"missing {path}")
    with path.open("r", encoding="utf-8") as fh:
        return tuple(Label(line.strip()) for line in fh if line.strip())


def load_weighted(base) -> WeightedLts:
    """Reload the three weighted-LTS files, recompute the trace counts from
    the structure, and verify them against `<base>.sww`."""
    base = Path(base)
    labels = load_subsystem_alphabet(base)
    swc, sww = Path(f"{base}.swc"), Path(f"{base}.sww")
    for path in (swc, sww):
        if not path.exists():
            raise WeightedFileError(f"missing {path}")
    stored: list[int] = []
    with sww.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                stored.append(int(line))
    n = len(stored)
    if n == 0:
        raise WeightedFileError(f"{sww} is empty")
    transitions: list[tuple[int, Label, int]] = []
    with swc.open("r", encoding="utf-8") as fh:
        for idx, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 3:
                raise WeightedFileError(f"{swc}:{idx}: expected 'src labelID dst'")
            src, lab_id, dst = (int(p) for p in parts)
            if not (0 <= src < n and 0 <= dst < n):
                raise WeightedFileError(f"{swc}:{idx}: state ID out of range")
            if not 0 <= lab_id < len(labels):
                raise WeightedFileError(f"{swc}:{idx}: label ID {lab_id} out of range")
            transitions.append((src, labels[lab_id], dst))
    lts = Lts(n, 0, transitions, labels=labels)
    try:
        recomputed = _tc_over(lts)
    except CycleError as exc:
        raise WeightedFileError(f"{swc}: stored subsystem is cyclic: {exc}") from exc
    if len(recomputed) != n:
        raise WeightedFileError(
            f"{swc}: {n - len(recomputed)} stored states unreachable from state 0"
        )
    for state in range(n):
        if recomputed[state] != stored[state]:
            raise WeightedFileError(
                f"{sww}: trace count of state {state} is {stored[state]}, "
                f"recomputed {recomputed[state]}"
            )
    return WeightedLts(lts, tuple(stored))


def _tc_over(lts: Lts) -> dict[int, int]:
    """Trace counts keyed by the LTS's own state numbers (reachable part only)."""
    tc: dict[int, int] = {}
    on_stack: set[int] = set()
    seen: set[int] = {lts.initial}
    stack: list[tuple[int, int]] = [(lts.initial, 0)]
    on_stack.add(lts.initial)
    path = [lts.initial]
    while stack:
        state, edge_idx = stack[-1]
        edges = lts.adj[state]
        if edge_idx < len(edges):
            stack[-1] = (state, edge_idx + 1)
            child = edges[edge_idx][1]
            if child in on_stack:
                raise CycleError(path[path.index(child):] + [child])
            if child not in seen:
                seen.add(child)
                on_stack.add(child)
                path.append(child)
                stack.append((child, 0))
        else:
            tc[state] = sum(tc[dst] for _, dst in edges) if edges else 1
            on_stack.discard(state)
            path.pop()
            stack.pop()
    return tc
