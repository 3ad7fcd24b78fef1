"""Labelled transition systems, networks of LTSs, and the synchronous product.

A network is a list of component LTSs with pairwise disjoint alphabets plus
synchronisation rules: a rule (a, b -> c) forces an a-transition of one
component and a b-transition of another to fire together, observable as the
single product action c.  Labels not bound by any rule interleave freely.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

__all__ = [
    "Label",
    "Lts",
    "SyncRule",
    "Network",
    "ProductState",
    "LtsFormatError",
    "DeterminismError",
    "NetworkError",
    "load_lts",
    "write_lts",
    "load_network",
    "check_network",
    "sync_result_set",
    "relabel",
    "product_alphabet",
    "product_next",
    "initial_state",
]

ProductState = tuple  # vector of per-component state IDs

_LABEL_RE = re.compile(r'[^\s"]+\Z')


class LtsFormatError(ValueError):
    """Raised for malformed LTS files or network manifests."""

    def __init__(self, path, line_no: int, message: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class DeterminismError(ValueError):
    """A state has two outgoing transitions with the same label."""

    def __init__(self, state: int, label: "Label"):
        self.state = state
        self.label = label
        super().__init__(
            f"state {state} has two transitions labelled {label.name!r} "
            f"with different targets"
        )


class NetworkError(ValueError):
    """A network violates its structural invariants."""


class Label:
    """An interned action name: equal name means the identical object.

    Names contain no whitespace and no double quotes, so labels can travel
    un-escaped through the space-delimited wire protocol and file formats.
    """

    __slots__ = ("name",)
    _registry: dict = {}

    def __new__(cls, name: str) -> "Label":
        try:
            return cls._registry[name]
        except KeyError:
            pass
        if not _LABEL_RE.match(name):
            raise ValueError(f"invalid label name {name!r}")
        obj = object.__new__(cls)
        obj.name = name
        cls._registry[name] = obj
        return obj

    def __repr__(self) -> str:
        return f"Label({self.name!r})"

    def __str__(self) -> str:
        return self.name

    # identity equality/hash: interning makes them coincide with name equality

    def __reduce__(self):
        return (Label, (self.name,))


class Lts:
    """An explicit LTS: states 0..n-1, an initial state, labelled transitions.

    Adjacency lists keep the order in which transitions were supplied (file
    order for parsed systems).  Label-determinism is enforced: per state, a
    label leads to at most one target.  Exact duplicate transitions collapse.
    """

    __slots__ = ("n_states", "initial", "labels", "adj", "by_label")

    def __init__(
        self,
        n_states: int,
        initial: int,
        transitions: Iterable[tuple[int, Label, int]],
        labels: Optional[Sequence[Label]] = None,
    ):
        if n_states < 1:
            raise ValueError("an LTS needs at least one state")
        if not 0 <= initial < n_states:
            raise ValueError(f"initial state {initial} out of range 0..{n_states - 1}")
        self.n_states = n_states
        self.initial = initial
        self.adj: list[list[tuple[Label, int]]] = [[] for _ in range(n_states)]
        self.by_label: list[dict[Label, int]] = [{} for _ in range(n_states)]
        seen: set[tuple[int, Label, int]] = set()
        label_order: dict[Label, None] = dict.fromkeys(labels or ())
        for src, lab, dst in transitions:
            if not 0 <= src < n_states or not 0 <= dst < n_states:
                raise ValueError(
                    f"transition ({src},{lab.name!r},{dst}) references a state "
                    f">= {n_states}"
                )
            if (src, lab, dst) in seen:
                continue
            prev = self.by_label[src].get(lab)
            if prev is not None and prev != dst:
                raise DeterminismError(src, lab)
            seen.add((src, lab, dst))
            self.by_label[src][lab] = dst
            self.adj[src].append((lab, dst))
            label_order.setdefault(lab)
        self.labels: tuple[Label, ...] = tuple(label_order)

    @property
    def n_transitions(self) -> int:
        return sum(len(a) for a in self.adj)

    def transitions(self) -> Iterator[tuple[int, Label, int]]:
        for src, edges in enumerate(self.adj):
            for lab, dst in edges:
                yield src, lab, dst

    def __repr__(self) -> str:
        return (
            f"Lts(states={self.n_states}, transitions={self.n_transitions}, "
            f"initial={self.initial})"
        )


_AUT_HEADER_RE = re.compile(r"des\s*\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)\s*\Z")
_AUT_EDGE_RE = re.compile(r'\(\s*(\d+)\s*,\s*"([^"]*)"\s*,\s*(\d+)\s*\)\s*\Z')


def load_lts(path) -> Lts:
    """Parse an LTS file: `des (<init>,<#transitions>,<#states>)` then one
    `(<src>,"<label>",<dst>)` per line."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise LtsFormatError(path, 1, "empty file, expected a 'des' header")
    m = _AUT_HEADER_RE.match(lines[0].strip())
    if not m:
        raise LtsFormatError(path, 1, f"bad header {lines[0]!r}")
    initial, n_trans, n_states = (int(g) for g in m.groups())
    if n_states < 1:
        raise LtsFormatError(path, 1, "state count must be positive")
    if initial >= n_states:
        raise LtsFormatError(path, 1, f"initial state {initial} >= {n_states} states")
    transitions: list[tuple[int, Label, int]] = []
    for idx, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        m = _AUT_EDGE_RE.match(line)
        if not m:
            raise LtsFormatError(path, idx, f"bad transition line {raw!r}")
        src, name, dst = int(m.group(1)), m.group(2), int(m.group(3))
        try:
            lab = Label(name)
        except ValueError as exc:
            raise LtsFormatError(path, idx, str(exc)) from None
        if src >= n_states or dst >= n_states:
            raise LtsFormatError(
                path, idx, f"dangling state ID in {line!r} (only {n_states} states)"
            )
        transitions.append((src, lab, dst))
    if len(transitions) != n_trans:
        raise LtsFormatError(
            path,
            1,
            f"header declares {n_trans} transitions, file has {len(transitions)}",
        )
    try:
        return Lts(n_states, initial, transitions)
    except DeterminismError as exc:
        raise LtsFormatError(path, 1, str(exc)) from exc


def write_lts(lts: Lts, path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"des ({lts.initial},{lts.n_transitions},{lts.n_states})\n")
        for src, lab, dst in lts.transitions():
            fh.write(f'({src},"{lab.name}",{dst})\n')


@dataclass(frozen=True)
class SyncRule:
    """Symmetric synchronisation rule (a, b -> result), stored with the
    lexicographically smaller input first."""

    a: Label
    b: Label
    result: Label

    def __post_init__(self):
        if self.a is self.b:
            raise NetworkError(f"rule inputs must differ, got {self.a.name!r} twice")
        if self.a.name > self.b.name:
            a, b = self.a, self.b
            object.__setattr__(self, "a", b)
            object.__setattr__(self, "b", a)

    def inputs(self) -> tuple[Label, Label]:
        return (self.a, self.b)


class Network:
    """A system: component LTSs, synchronisation rules, and error labels.

    Immutable after construction.  Structural validity is reported by
    check_network(); product operations assume a valid network.
    """

    __slots__ = ("components", "rules", "error_labels", "_meta")

    def __init__(
        self,
        components: Sequence[Lts],
        rules: Iterable[SyncRule] = (),
        error_labels: Iterable[Label] = (),
    ):
        if not components:
            raise NetworkError("a network needs at least one component")
        self.components: tuple[Lts, ...] = tuple(components)
        canonical: dict[tuple[Label, Label, Label], SyncRule] = {}
        for r in rules:
            canonical.setdefault((r.a, r.b, r.result), r)
        self.rules: tuple[SyncRule, ...] = tuple(canonical.values())
        self.error_labels: frozenset[Label] = frozenset(error_labels)
        self._meta = None

    def _compiled(self) -> "_NetMeta":
        if self._meta is None:
            self._meta = _NetMeta(self)
        return self._meta

    def __repr__(self) -> str:
        return (
            f"Network(components={len(self.components)}, rules={len(self.rules)}, "
            f"errors={len(self.error_labels)})"
        )


class _NetMeta:
    """Lookup tables compiled once per network for fast product stepping."""

    __slots__ = (
        "owner",
        "rule_of_input",
        "relabel_map",
        "fire_from",
        "alphabet",
        "results",
    )

    def __init__(self, net: Network):
        self.owner: dict[Label, int] = {}
        for i, comp in enumerate(net.components):
            for lab in comp.labels:
                if lab in self.owner:
                    raise NetworkError(
                        f"label {lab.name!r} occurs in components "
                        f"{self.owner[lab]} and {i}; alphabets must be disjoint"
                    )
                self.owner[lab] = i
        self.rule_of_input: dict[Label, SyncRule] = {}
        self.results: frozenset[Label] = frozenset(r.result for r in net.rules)
        for r in net.rules:
            for lab in r.inputs():
                if lab in self.rule_of_input:
                    raise NetworkError(f"label {lab.name!r} occurs in two rules")
                self.rule_of_input[lab] = r
        self.relabel_map: dict[Label, Label] = {
            lab: r.result for lab, r in self.rule_of_input.items()
        }
        # fire_from[a] = (partner label, its component, result): set only on the
        # canonical first input so each rule fires once per product state.
        self.fire_from: dict[Label, tuple[Label, int, Label]] = {}
        for r in net.rules:
            j = self.owner.get(r.b)
            if j is not None:
                self.fire_from[r.a] = (r.b, j, r.result)
        free = [
            lab
            for comp in net.components
            for lab in comp.labels
            if lab not in self.rule_of_input
        ]
        self.alphabet: frozenset[Label] = frozenset(free) | self.results


def check_network(net: Network) -> list[str]:
    """Return one message per violated network invariant (empty list = valid)."""
    violations: list[str] = []
    seen: dict[Label, int] = {}
    comp_labels: set[Label] = set()
    for i, comp in enumerate(net.components):
        for lab in comp.labels:
            comp_labels.add(lab)
            if lab in seen:
                violations.append(
                    f"alphabet-overlap: label {lab.name!r} occurs in components "
                    f"{seen[lab]} and {i}"
                )
            else:
                seen[lab] = i
    used: dict[Label, int] = {}
    for r in net.rules:
        for lab in (r.a, r.b, r.result):
            used[lab] = used.get(lab, 0) + 1
    for lab, count in used.items():
        if count > 1:
            violations.append(
                f"rule-multiplicity: label {lab.name!r} occurs in {count} rule slots"
            )
    for r in net.rules:
        for lab in r.inputs():
            if lab not in comp_labels:
                violations.append(
                    f"rule-input-missing: {lab.name!r} is not in any component alphabet"
                )
        if r.result in comp_labels:
            violations.append(
                f"rule-result-in-component: {r.result.name!r} must not occur in a "
                f"component alphabet"
            )
    return violations


def load_network(path) -> Network:
    """Parse a network manifest.

    Lines: `component <lts-path>` (relative to the manifest), `sync <a> <b> -> <c>`,
    `error <label>`, blank lines and `#` comments.  Raises on the first parse
    problem and on any structural violation (no automatic relabelling).
    """
    path = Path(path)
    base = path.parent
    components: list[Lts] = []
    rules: list[SyncRule] = []
    errors: list[Label] = []
    with path.open("r", encoding="utf-8") as fh:
        for idx, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "component" and len(parts) == 2:
                components.append(load_lts(base / parts[1]))
            elif parts[0] == "sync" and len(parts) == 5 and parts[3] == "->":
                rules.append(SyncRule(Label(parts[1]), Label(parts[2]), Label(parts[4])))
            elif parts[0] == "error" and len(parts) == 2:
                errors.append(Label(parts[1]))
            else:
                raise LtsFormatError(path, idx, f"bad manifest line {raw.rstrip()!r}")
    if not components:
        raise LtsFormatError(path, 1, "manifest declares no components")
    net = Network(components, rules, errors)
    violations = check_network(net)
    if violations:
        raise NetworkError(f"invalid network {path}: " + "; ".join(violations))
    return net


def sync_result_set(net: Network, labels: Iterable[Label]) -> frozenset[Label]:
    """Result labels of rules with exactly one input inside `labels`."""
    lab_set = set(labels)
    return frozenset(
        r.result for r in net.rules if (r.a in lab_set) != (r.b in lab_set)
    )


def relabel(net: Network, lab: Label) -> Label:
    """Product-level name of a component action: the rule result if the action
    is forced to synchronise, otherwise the action itself."""
    return net._compiled().relabel_map.get(lab, lab)


def product_alphabet(net: Network) -> frozenset[Label]:
    """Labels observable on the product: non-synchronising component labels
    plus rule results."""
    return net._compiled().alphabet


def initial_state(net: Network) -> ProductState:
    return tuple(c.initial for c in net.components)


def product_next(
    net: Network,
    state: ProductState,
    allowed: Optional[frozenset] = None,
) -> list[tuple[Label, ProductState]]:
    """Enabled product moves from `state`, restricted to `allowed` labels
    (None = no restriction).

    A non-synchronising component action fires alone; a rule (a, b -> c)
    fires both partner transitions simultaneously and appears as c.  Rule
    inputs never surface as product labels.
    """
    meta = net._compiled()
    comps = net.components
    rule_of_input = meta.rule_of_input
    fire_from = meta.fire_from
    out: list[tuple[Label, ProductState]] = []
    for i, comp in enumerate(comps):
        for lab, dst in comp.adj[state[i]]:
            rule = rule_of_input.get(lab)
            if rule is None:
                if allowed is not None and lab not in allowed:
                    continue
                out.append((lab, state[:i] + (dst,) + state[i + 1 :]))
            else:
                info = fire_from.get(lab)
                if info is None:
                    continue  # second input; handled from the partner side
                partner, j, result = info
                if allowed is not None and result not in allowed:
                    continue
                dst2 = comps[j].by_label[state[j]].get(partner)
                if dst2 is None:
                    continue
                succ = list(state)
                succ[i] = dst
                succ[j] = dst2
                out.append((result, tuple(succ)))
    return out
