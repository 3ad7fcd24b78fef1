"""The coordinator's ledger of done trace numbers, plus lease bookkeeping.

The ledger is a normalized list of half-open [i, j) intervals over
[0, total): sorted, disjoint, never adjacent.  A run is finished when the
ledger collapses to the single interval [0, total).  Leases mark trace
numbers handed to a worker whose result is still pending, so concurrent
workers never race on the same number.
"""

from __future__ import annotations

import random
import time
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterator, Optional

__all__ = ["TraceRangeList", "LeaseTable", "Lease", "pick_unexplored"]


class TraceRangeList:
    def __init__(self, total: int):
        if total < 0:
            raise ValueError("total must be non-negative")
        self.total = total
        self._starts: list[int] = []
        self._ends: list[int] = []
        self._covered = 0

    def add(self, lo: int, hi: int) -> None:
        """Insert [lo, hi), merging overlaps and adjacency."""
        if not 0 <= lo < hi <= self.total:
            raise ValueError(f"range [{lo},{hi}) out of bounds [0,{self.total})")
        # intervals with end >= lo and start <= hi merge with the new one
        left = bisect_left(self._ends, lo)
        right = bisect_right(self._starts, hi)
        merged_lo, merged_hi = lo, hi
        absorbed = 0
        if left < right:
            merged_lo = min(merged_lo, self._starts[left])
            merged_hi = max(merged_hi, self._ends[right - 1])
            absorbed = sum(
                self._ends[k] - self._starts[k] for k in range(left, right)
            )
            del self._starts[left:right]
            del self._ends[left:right]
        self._starts.insert(left, merged_lo)
        self._ends.insert(left, merged_hi)
        self._covered += (merged_hi - merged_lo) - absorbed

    def covered(self) -> int:
        return self._covered

    def is_complete(self) -> bool:
        return self._covered == self.total

    def __contains__(self, trace_id: int) -> bool:
        k = bisect_right(self._starts, trace_id) - 1
        return k >= 0 and trace_id < self._ends[k]

    def ranges(self) -> list[tuple[int, int]]:
        return list(zip(self._starts, self._ends))

    def gaps(self) -> Iterator[tuple[int, int]]:
        """Uncovered intervals, in order."""
        lo = 0
        for start, end in zip(self._starts, self._ends):
            if lo < start:
                yield lo, start
            lo = end
        if lo < self.total:
            yield lo, self.total

    def audit(self) -> None:
        """Check the normal form; meant for tests."""
        prev_end = None
        running = 0
        for start, end in zip(self._starts, self._ends):
            assert 0 <= start < end <= self.total
            if prev_end is not None:
                assert start > prev_end, "adjacent or overlapping intervals"
            prev_end = end
            running += end - start
        assert running == self._covered, "covered() out of sync"

    def dump(self, fh) -> None:
        for start, end in zip(self._starts, self._ends):
            fh.write(f"{start} {end}\n")

    @classmethod
    def load(cls, fh, total: int) -> "TraceRangeList":
        ledger = cls(total)
        for line in fh:
            if line.strip():
                lo, hi = (int(p) for p in line.split())
                ledger.add(lo, hi)
        return ledger

    def __repr__(self) -> str:
        return f"TraceRangeList({self.ranges()!r}, total={self.total})"


@dataclass
class Lease:
    worker_id: str
    issued_at: float


class LeaseTable:
    """Trace numbers currently out with a worker."""

    def __init__(self):
        self._leases: dict[int, Lease] = {}

    def grant(self, trace_id: int, worker_id: str, now: Optional[float] = None) -> None:
        self._leases[trace_id] = Lease(worker_id, time.monotonic() if now is None else now)

    def release(self, trace_id: int) -> Optional[Lease]:
        return self._leases.pop(trace_id, None)

    def purge_expired(self, timeout: float, now: Optional[float] = None) -> list[int]:
        now = time.monotonic() if now is None else now
        expired = [k for k, v in self._leases.items() if now - v.issued_at > timeout]
        for k in expired:
            del self._leases[k]
        return expired

    def drop_covered(self, ledger: TraceRangeList) -> list[int]:
        """Forget leases whose number got covered by pruning in the meantime."""
        gone = [k for k in self._leases if k in ledger]
        for k in gone:
            del self._leases[k]
        return gone

    def ids(self) -> list[int]:
        return sorted(self._leases)

    def __contains__(self, trace_id: int) -> bool:
        return trace_id in self._leases

    def __len__(self) -> int:
        return len(self._leases)


def pick_unexplored(
    ledger: TraceRangeList,
    leases: LeaseTable,
    rng: random.Random,
    worker_id: str = "?",
) -> Optional[int]:
    """Draw a trace number uniformly from the uncovered, unleased remainder
    and lease it; None when no candidate exists.

    Draws a rank r over the remainder and walks the ledger's gaps in order,
    skipping leased numbers, until the rank lands.
    """
    leased = leases.ids()
    remaining = ledger.total - ledger.covered() - sum(1 for k in leased if k not in ledger)
    if remaining <= 0:
        return None
    r = rng.randrange(remaining)
    li = 0
    for lo, hi in ledger.gaps():
        while li < len(leased) and leased[li] < lo:
            li += 1
        in_gap = []
        while li < len(leased) and leased[li] < hi:
            in_gap.append(leased[li])
            li += 1
        width = (hi - lo) - len(in_gap)
        if r >= width:
            r -= width
            continue
        candidate = lo + r
        for taken in in_gap:
            if taken <= candidate:
                candidate += 1
            else:
                break
        leases.grant(candidate, worker_id)
        return candidate
    return None
