"""Independent brute-force references the real implementations are checked
against.  Everything here enumerates explicitly and stays deliberately naive."""

from __future__ import annotations

import random
from typing import Optional

from swarmcheck.lts import Label, Lts


def maximal_traces(
    lts: Lts, start: Optional[int] = None, bound: Optional[int] = None
) -> list[tuple]:
    """All maximal label sequences from `start`, by plain recursion.

    A trace ends at a state without outgoing edges, or after `bound`
    transitions when a bound is given.  Parallel edges with different labels
    count as different traces."""
    start = lts.initial if start is None else start

    def walk(state: int, budget):
        edges = lts.adj[state] if budget is None or budget > 0 else []
        if not edges:
            return [()]
        out = []
        for lab, dst in edges:
            for tail in walk(dst, None if budget is None else budget - 1):
                out.append((lab,) + tail)
        return out

    return walk(start, bound)


def count_maximal_traces(lts: Lts, start: Optional[int] = None,
                         bound: Optional[int] = None) -> int:
    return len(maximal_traces(lts, start, bound))


def random_acyclic_lts(rng: random.Random, max_states: int = 12,
                       max_out: int = 3, tag: str = "x") -> Lts:
    """A random DAG-shaped LTS: edges only go to higher state numbers, so it
    is acyclic by construction.  Occasionally two labels share a target."""
    n = rng.randint(1, max_states)
    transitions = []
    for src in range(n - 1):
        for k in range(rng.randint(0, max_out)):
            dst = rng.randint(src + 1, n - 1)
            transitions.append((src, Label(f"{tag}_{src}_{k}"), dst))
    return Lts(n, 0, transitions)


def brute_product(components, rules) -> tuple[set, set]:
    """Reachable product states and transitions by explicit worklist, written
    independently of the package's product stepping.

    components: list of Lts; rules: list of (Label, Label, Label) triples."""
    input_rule = {}
    for a, b, c in rules:
        input_rule[a] = (b, c)
        input_rule[b] = (a, c)
    init = tuple(comp.initial for comp in components)
    seen = {init}
    edges = set()
    todo = [init]
    while todo:
        state = todo.pop()
        moves = []
        for i, comp in enumerate(components):
            for lab, dst in comp.adj[state[i]]:
                if lab not in input_rule:
                    succ = state[:i] + (dst,) + state[i + 1:]
                    moves.append((lab, succ))
                else:
                    partner, result = input_rule[lab]
                    for j, other in enumerate(components):
                        if j == i:
                            continue
                        for lab2, dst2 in other.adj[state[j]]:
                            if lab2 is partner:
                                succ = list(state)
                                succ[i] = dst
                                succ[j] = dst2
                                moves.append((result, tuple(succ)))
        for lab, succ in moves:
            edges.add((state, lab, succ))
            if succ not in seen:
                seen.add(succ)
                todo.append(succ)
    return seen, edges
