"""Bijection between trace numbers and maximal traces of a weighted LTS.

Every maximal trace gets a number in [0, tc(init)).  The children of a state
partition its number range in child order (ascending state number), each
child owning a block as wide as its own trace count; decoding walks down the
blocks, encoding sums the blocks skipped.  A prefix therefore always owns one
contiguous range, which is what the coordinator's ledger exploits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .counting import WeightedLts
from .lts import Label, Network, relabel

__all__ = [
    "SubTrace",
    "SwarmTrace",
    "decode",
    "encode",
    "prefix_range",
    "child_ranges",
    "to_swarm",
]


@dataclass(frozen=True)
class SubTrace:
    """A maximal trace through the weighted subsystem LTS."""

    path: tuple[int, ...]  # state numbers, path[0] = initial state
    labels: tuple[Label, ...]  # len(labels) = len(path) - 1


@dataclass(frozen=True)
class SwarmTrace:
    """A numbered trace with its actions lifted to product-level names."""

    trace_id: int
    actions: tuple[Label, ...]


def child_ranges(
    w: WeightedLts, state: int, base: int
) -> Iterator[tuple[Label, int, int, int]]:
    """Yield (label, child, lo, hi) per outgoing edge in child order; the
    [lo, hi) blocks partition [base, base + tc(state))."""
    lo = base
    for lab, child in w.children(state):
        hi = lo + w.tc[child]
        yield lab, child, lo, hi
        lo = hi


def decode(w: WeightedLts, trace_id: int) -> SubTrace:
    """Trace number -> maximal trace."""
    if not 0 <= trace_id < w.total:
        raise ValueError(f"trace ID {trace_id} out of range [0, {w.total})")
    state = w.lts.initial
    base = 0
    path = [state]
    labels: list[Label] = []
    while w.children(state):
        for lab, child, lo, hi in child_ranges(w, state, base):
            if trace_id < hi:
                state = child
                base = lo
                path.append(child)
                labels.append(lab)
                break
        else:  # blocks partition [base, base+tc) so this means corrupt weights
            raise AssertionError(f"trace counts inconsistent at state {state}")
    return SubTrace(tuple(path), tuple(labels))


def encode(w: WeightedLts, labels) -> int:
    """Maximal trace -> its number (inverse of decode, used for checking)."""
    state = w.lts.initial
    base = 0
    for pos, lab in enumerate(labels):
        for edge_lab, child, lo, _hi in child_ranges(w, state, base):
            if edge_lab is lab:
                state = child
                base = lo
                break
        else:
            raise ValueError(f"label {lab.name!r} not enabled at position {pos}")
    if w.children(state):
        raise ValueError("trace is not maximal; it stops before a deadlock")
    return base


def prefix_range(w: WeightedLts, prefix) -> tuple[int, int]:
    """Contiguous interval [i, j) of all maximal traces extending `prefix`."""
    state = w.lts.initial
    base = 0
    for pos, lab in enumerate(prefix):
        for edge_lab, child, lo, _hi in child_ranges(w, state, base):
            if edge_lab is lab:
                state = child
                base = lo
                break
        else:
            raise ValueError(f"prefix not executable: {lab.name!r} at position {pos}")
    return base, base + w.tc[state]


def to_swarm(net: Network, w: WeightedLts, trace: SubTrace, trace_id: int) -> SwarmTrace:
    """Lift a subsystem trace to product-level action names."""
    return SwarmTrace(trace_id, tuple(relabel(net, lab) for lab in trace.labels))
