"""Product state-space searches.

run_iss is the bounded worker search: a layered BFS that lets everything
outside the driver subsystem run freely but allows subsystem-attributable
actions only when they match the current position of the assigned trace.
Per position it records which subsystem-attributable actions were enabled
anywhere in the frontier region; the coordinator prunes with that.

run_full_bfs is the exhaustive reference search and run_swarm_dfs the
baseline of independent randomized depth-first sweeps.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Iterable, Optional

from .codec import SwarmTrace
from .lts import (
    Label,
    Network,
    ProductState,
    initial_state,
    product_alphabet,
    product_next,
    relabel,
)

__all__ = [
    "RestrictionSet",
    "FeedbackVector",
    "BugReport",
    "IssResult",
    "ExploreResult",
    "StateLimitExceeded",
    "ConfigurationError",
    "run_iss",
    "run_full_bfs",
    "run_swarm_dfs",
    "replay_witness",
]


class StateLimitExceeded(RuntimeError):
    def __init__(self, cap: int):
        self.cap = cap
        super().__init__(f"search exceeded the state cap of {cap}")


class ConfigurationError(ValueError):
    """The trace or subsystem description does not fit the network."""


@dataclass(frozen=True)
class RestrictionSet:
    """Product-level labels attributable to the driver subsystem.

    Built from the subsystem alphabet: its non-synchronising labels appear in
    the product as themselves, and each rule with exactly one input inside
    the alphabet contributes its result label.
    """

    sub_alphabet: frozenset
    product_labels: frozenset

    @classmethod
    def from_alphabet(cls, net: Network, labels: Iterable[Label]) -> "RestrictionSet":
        sub = frozenset(labels)
        restricted: set[Label] = set()
        for lab in sub:
            rule = next((r for r in net.rules if lab in r.inputs()), None)
            if rule is None:
                restricted.add(lab)
            else:
                other = rule.b if lab is rule.a else rule.a
                if other not in sub:
                    restricted.add(rule.result)
                # both inputs inside the subsystem: the pair synchronises
                # internally, so the subsystem LTS must already carry the
                # result label; neither raw input can surface in the product
        return cls(sub, frozenset(restricted))

    @classmethod
    def from_components(cls, net: Network, indices: Iterable[int]) -> "RestrictionSet":
        chosen = set(indices)
        alphabet: set[Label] = set()
        for i in chosen:
            alphabet.update(net.components[i].labels)
        for r in net.rules:
            if r.a in alphabet and r.b in alphabet:
                raise ConfigurationError(
                    f"rule ({r.a.name},{r.b.name}->{r.result.name}) synchronises two "
                    f"subsystem components; supply a pre-composed subsystem LTS "
                    f"carrying {r.result.name!r} instead"
                )
        return cls.from_alphabet(net, alphabet)


@dataclass(frozen=True)
class FeedbackVector:
    """Per-position sets of subsystem-attributable actions seen enabled."""

    sets: tuple[frozenset, ...]
    consumed_fully: bool

    @property
    def reached(self) -> int:
        return len(self.sets)


@dataclass(frozen=True)
class BugReport:
    kind: str  # "error-label" or "deadlock"
    label: Optional[Label]
    witness: tuple[Label, ...]


@dataclass
class IssResult:
    feedback: FeedbackVector
    states_explored: int
    transitions_fired: int
    duration: float
    bug: Optional[BugReport] = None
    visited: Optional[set] = None
    layers: Optional[list] = None  # per-position expanded states (test mode)
    parents: Optional[dict] = None  # discovery tree (test mode)


@dataclass
class ExploreResult:
    states_explored: int
    transitions_fired: int
    duration: float
    bug: Optional[BugReport] = None
    visited: Optional[set] = None


def _witness(parents: dict, state: ProductState) -> list[Label]:
    labels: list[Label] = []
    while parents[state] is not None:
        state, lab = parents[state]
        labels.append(lab)
    labels.reverse()
    return labels


def run_iss(
    net: Network,
    sub: RestrictionSet,
    sigma: SwarmTrace,
    *,
    state_cap: Optional[int] = None,
    detect_deadlocks: bool = False,
    retain_visited: bool = False,
    record_layers: bool = False,
) -> IssResult:
    """Explore the product restricted to the swarm trace `sigma`.

    Position i maintains a frontier region closed under non-subsystem moves.
    Inside it, firing sigma's current action collects the next region's seeds
    and every enabled subsystem-attributable action lands in the position's
    feedback set.  The search ends when both the region and the seeds are
    exhausted; a transition carrying an error label stops it immediately.
    """
    t0 = time.monotonic()
    restricted = sub.product_labels
    alphabet = product_alphabet(net)
    for lab in sigma.actions:
        if lab not in alphabet:
            raise ConfigurationError(f"trace action {lab.name!r} unknown to the network")
        if lab not in restricted:
            raise ConfigurationError(
                f"trace action {lab.name!r} is not attributable to the subsystem"
            )
    actions = sigma.actions
    m = len(actions)
    errors = net.error_labels
    init = initial_state(net)
    position = 0
    open_: set = {init}
    closed: set = set()
    next_: set = set()
    step: set = set()
    fsets: list[set] = [set()]
    parents: dict = {init: None}
    layers: Optional[list] = [set()] if record_layers else None
    explored = 0
    fired = 0
    bug: Optional[BugReport] = None

    while open_ or step:
        if not open_:
            position += 1
            open_ = step - closed
            step = set()
            fsets.append(set())
            if layers is not None:
                layers.append(set())
        fset = fsets[position]
        want = actions[position] if position < m else None
        for state in open_:
            explored += 1
            if layers is not None:
                layers[position].add(state)
            succs = product_next(net, state)
            if detect_deadlocks and not succs:
                bug = BugReport("deadlock", None, tuple(_witness(parents, state)))
                break
            for lab, succ in succs:
                if lab in restricted:
                    fset.add(lab)
                    if lab is not want:
                        continue
                    bucket = step
                else:
                    bucket = next_
                fired += 1
                if succ not in parents:
                    parents[succ] = (state, lab)
                    if state_cap is not None and len(parents) > state_cap:
                        raise StateLimitExceeded(state_cap)
                if lab in errors:
                    bug = BugReport(
                        "error-label", lab, tuple(_witness(parents, state)) + (lab,)
                    )
                    break
                bucket.add(succ)
            if bug is not None:
                break
        if bug is not None:
            break
        closed |= open_
        open_ = next_ - closed
        next_ = set()

    consumed = position == m and bug is None
    feedback = FeedbackVector(tuple(frozenset(s) for s in fsets), consumed)
    visited: Optional[set] = None
    if retain_visited:
        visited = set(closed)
        visited |= open_  # partially expanded batch when a bug cut the run short
    return IssResult(
        feedback=feedback,
        states_explored=explored,
        transitions_fired=fired,
        duration=time.monotonic() - t0,
        bug=bug,
        visited=visited,
        layers=layers,
        parents=parents if record_layers else None,
    )


def run_full_bfs(
    net: Network,
    *,
    state_cap: Optional[int] = None,
    retain_visited: bool = True,
) -> ExploreResult:
    """Exhaustive breadth-first reachability of the product."""
    t0 = time.monotonic()
    init = initial_state(net)
    visited: set = {init}
    frontier = [init]
    fired = 0
    while frontier:
        next_frontier = []
        for state in frontier:
            for _lab, succ in product_next(net, state):
                fired += 1
                if succ not in visited:
                    visited.add(succ)
                    if state_cap is not None and len(visited) > state_cap:
                        raise StateLimitExceeded(state_cap)
                    next_frontier.append(succ)
        frontier = next_frontier
    return ExploreResult(
        states_explored=len(visited),
        transitions_fired=fired,
        duration=time.monotonic() - t0,
        visited=visited if retain_visited else None,
    )


def run_swarm_dfs(
    net: Network,
    seed: int,
    *,
    state_cap: Optional[int] = None,
    retain_visited: bool = False,
) -> ExploreResult:
    """One swarm baseline run: full DFS with seed-shuffled successor order,
    stopping at the first error-labelled transition."""
    t0 = time.monotonic()
    rng = random.Random(seed)
    errors = net.error_labels
    init = initial_state(net)
    visited: set = {init}
    parents: dict = {init: None}
    stack = [init]
    fired = 0
    bug: Optional[BugReport] = None
    while stack and bug is None:
        state = stack.pop()
        succs = product_next(net, state)
        rng.shuffle(succs)
        for lab, succ in succs:
            fired += 1
            if succ not in parents:
                parents[succ] = (state, lab)
            if lab in errors:
                bug = BugReport(
                    "error-label", lab, tuple(_witness(parents, state)) + (lab,)
                )
                break
            if succ not in visited:
                visited.add(succ)
                if state_cap is not None and len(visited) > state_cap:
                    raise StateLimitExceeded(state_cap)
                stack.append(succ)
    return ExploreResult(
        states_explored=len(visited),
        transitions_fired=fired,
        duration=time.monotonic() - t0,
        bug=bug,
        visited=visited if retain_visited else None,
    )


def replay_witness(net: Network, labels: Iterable[Label]) -> ProductState:
    """Follow a label sequence from the initial product state; the product is
    label-deterministic, so each step has at most one match.  Raises if a
    step is not enabled."""
    state = initial_state(net)
    for pos, lab in enumerate(labels):
        for step_lab, succ in product_next(net, state):
            if step_lab is lab:
                state = succ
                break
        else:
            raise ValueError(f"witness not replayable: {lab.name!r} at step {pos}")
    return state
