"""Labeled Petri nets: PNML reader, firing semantics, WF-net structural
checks, and discovery of decision places with deterministic arc labels.

Transitions without a usable name are hidden; the pipeline treats them as
legitimate choice outcomes that emit no event.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Union
from xml.etree import ElementTree as ET

__all__ = [
    "Marking",
    "PetriNet",
    "InterestingPlace",
    "Finding",
    "PnmlError",
    "NotEnabledError",
    "parse_pnml",
    "validate_structure",
    "decision_places",
    "hidden_skip_target",
]

DEFAULT_INVISIBLE_PATTERN = r"^(tau|skip_.*)$"


class PnmlError(ValueError):
    """Raised for malformed or unsupported PNML input."""


class NotEnabledError(RuntimeError):
    """Raised when firing a transition that is not enabled."""


class Marking:
    """Immutable multiset of tokens over places."""

    __slots__ = ("_counts", "_key")

    def __init__(self, counts=()):
        if isinstance(counts, Marking):
            items = counts._counts.items()
        elif isinstance(counts, dict):
            items = counts.items()
        else:
            items = counts
        clean = {}
        for place, n in items:
            if n < 0:
                raise ValueError(f"negative token count for {place!r}")
            if n:
                clean[place] = clean.get(place, 0) + n
        self._counts = clean
        self._key = tuple(sorted(clean.items()))

    def __getitem__(self, place) -> int:
        return self._counts.get(place, 0)

    def __contains__(self, place) -> bool:
        return place in self._counts

    def items(self):
        return self._key

    def places(self):
        return self._counts.keys()

    def total(self) -> int:
        return sum(self._counts.values())

    def __eq__(self, other):
        return isinstance(other, Marking) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        inner = ", ".join(f"{p}:{n}" for p, n in self._key)
        return f"Marking({{{inner}}})"


@dataclass(frozen=True)
class InterestingPlace:
    """A decision place (out-degree >= 2) with labeled outgoing arcs.

    ``arc_labels`` maps each outgoing transition to an integer 1..k; the
    order is fixed (visible activity name lexicographically, hidden
    transitions last, transition id as the final key) so repeated runs on
    the same net label arcs identically.
    """

    place: str
    arc_labels: tuple  # tuple[(transition_id, label), ...] in label order
    incoming_transitions: frozenset
    outgoing_transitions: frozenset

    @property
    def k(self) -> int:
        return len(self.arc_labels)

    def label_of(self, transition: str) -> int:
        for tid, label in self.arc_labels:
            if tid == transition:
                return label
        raise KeyError(transition)

    def transition_of(self, label: int) -> str:
        for tid, lab in self.arc_labels:
            if lab == label:
                return tid
        raise KeyError(label)


class PetriNet:
    """Places, transitions (optionally labeled), arcs, and the two markings.

    Immutable after construction; adjacency is precomputed for fast firing.
    """

    def __init__(self, places, transitions, arcs,
                 initial_marking, final_marking, name="", warnings=()):
        self.name = name
        self.places = tuple(places)
        self.transitions = {}  # tid -> label or None
        order = []
        for tid, label in transitions:
            if tid in self.transitions:
                raise PnmlError(f"duplicate transition id {tid!r}")
            self.transitions[tid] = label
            order.append(tid)
        self.transition_order = tuple(order)
        place_set = set(self.places)
        if len(place_set) != len(self.places):
            raise PnmlError("duplicate place id")
        if place_set & set(self.transitions):
            raise PnmlError("place and transition share an id")

        self.arcs = tuple(arcs)
        self._pre_t = {t: [] for t in self.transitions}    # input places
        self._post_t = {t: [] for t in self.transitions}   # output places
        self._in_p = {p: [] for p in self.places}          # incoming transitions
        self._out_p = {p: [] for p in self.places}         # outgoing transitions
        for src, tgt in self.arcs:
            if src in place_set and tgt in self.transitions:
                self._pre_t[tgt].append(src)
                self._out_p[src].append(tgt)
            elif src in self.transitions and tgt in place_set:
                self._post_t[src].append(tgt)
                self._in_p[tgt].append(src)
            elif src in place_set and tgt in place_set:
                raise PnmlError(f"place-to-place arc {src!r} -> {tgt!r}")
            elif src in self.transitions and tgt in self.transitions:
                raise PnmlError(f"transition-to-transition arc {src!r} -> {tgt!r}")
            else:
                missing = src if src not in place_set | set(self.transitions) else tgt
                raise PnmlError(f"arc references unknown node {missing!r}")

        self.initial_marking = Marking(initial_marking)
        self.final_marking = Marking(final_marking)
        for m in (self.initial_marking, self.final_marking):
            unknown = set(m.places()) - place_set
            if unknown:
                raise PnmlError(f"marking references unknown places {sorted(unknown)}")
        self.warnings = tuple(warnings)

    # -- semantics ---------------------------------------------------------

    def label(self, transition: str) -> Optional[str]:
        return self.transitions[transition]

    def is_hidden(self, transition: str) -> bool:
        return self.transitions[transition] is None

    def preset(self, transition: str):
        return tuple(self._pre_t[transition])

    def postset(self, transition: str):
        return tuple(self._post_t[transition])

    def incoming(self, place: str):
        return tuple(self._in_p[place])

    def outgoing(self, place: str):
        return tuple(self._out_p[place])

    def enabled(self, marking: Marking) -> set:
        """Transitions with at least one token on every input place."""
        return {t for t in self.transitions
                if all(marking[p] >= 1 for p in self._pre_t[t]) and self._pre_t[t]}

    def fire(self, marking: Marking, transition: str) -> Marking:
        """Consume one token per input arc, produce one per output arc."""
        pre = self._pre_t[transition]
        if not pre or any(marking[p] < 1 for p in pre):
            raise NotEnabledError(f"transition {transition!r} not enabled in {marking!r}")
        counts = dict(marking.items())
        for p in pre:
            counts[p] -= 1
        for p in self._post_t[transition]:
            counts[p] = counts.get(p, 0) + 1
        return Marking(counts)

    def source_places(self):
        return tuple(p for p in self.places if not self._in_p[p])

    def sink_places(self):
        return tuple(p for p in self.places if not self._out_p[p])


@dataclass(frozen=True)
class Finding:
    code: str
    detail: str


def validate_structure(net: PetriNet):
    """Structural WF-net findings (empty list means acceptable).

    This is not a soundness check; liveness/boundedness are the caller's
    responsibility.
    """
    findings = []
    sources = net.source_places()
    sinks = net.sink_places()
    if len(sources) != 1:
        findings.append(Finding("not-single-source",
                                f"source places: {sorted(sources) or 'none'}"))
    if len(sinks) != 1:
        findings.append(Finding("not-single-sink",
                                f"sink places: {sorted(sinks) or 'none'}"))
    for t in net.transition_order:
        if not net.postset(t):
            findings.append(Finding("dead-end-transition",
                                    f"transition {t!r} has no output places"))
        if not net.preset(t):
            findings.append(Finding("dead-end-transition",
                                    f"transition {t!r} has no input places"))

    # undirected connectivity
    nodes = list(net.places) + list(net.transition_order)
    if nodes:
        adj = {n: set() for n in nodes}
        for src, tgt in net.arcs:
            adj[src].add(tgt)
            adj[tgt].add(src)
        start = sources[0] if sources else nodes[0]
        seen = {start}
        stack = [start]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        for n in nodes:
            if n not in seen:
                findings.append(Finding("disconnected-node",
                                        f"node {n!r} not connected to {start!r}"))
    return findings


def decision_places(net: PetriNet):
    """Every place with >= 2 outgoing arcs, arcs labeled 1..k.

    Ordering of labels: visible transitions first by activity name, hidden
    transitions afterwards, ties broken by transition id.
    """
    result = []
    for place in net.places:
        out = net.outgoing(place)
        if len(out) < 2:
            continue
        ordered = sorted(out, key=lambda t: (net.is_hidden(t),
                                             net.label(t) or "", t))
        arc_labels = tuple((tid, i + 1) for i, tid in enumerate(ordered))
        result.append(InterestingPlace(
            place=place,
            arc_labels=arc_labels,
            incoming_transitions=frozenset(net.incoming(place)),
            outgoing_transitions=frozenset(out),
        ))
    return result


def hidden_skip_target(net: PetriNet, transition: str) -> Optional[str]:
    """Activity a hidden transition skips to, when uniquely determined.

    Follows hidden transitions forward; returns the single visible activity
    reachable first, or None when it is not unique.
    """
    targets = set()
    seen = {transition}
    frontier = [transition]
    while frontier:
        t = frontier.pop()
        for place in net.postset(t):
            for nxt in net.outgoing(place):
                label = net.label(nxt)
                if label is not None:
                    targets.add(label)
                elif nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        if len(targets) > 1:
            return None
    return next(iter(targets)) if len(targets) == 1 else None


# -- PNML ------------------------------------------------------------------


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _iter_net_elements(net_el):
    """place/transition/arc elements, recursing into <page> blocks."""
    for child in net_el:
        tag = _local(child.tag)
        if tag in ("place", "transition", "arc"):
            yield tag, child
        elif tag == "page":
            yield from _iter_net_elements(child)


def _element_name(el) -> Optional[str]:
    for child in el:
        if _local(child.tag) == "name":
            for sub in child:
                if _local(sub.tag) == "text":
                    return sub.text
    return None


def parse_pnml(source: Union[str, IO],
               invisible_pattern: str = DEFAULT_INVISIBLE_PATTERN) -> PetriNet:
    """Read a PNML net.

    A transition is hidden when its name is absent/empty, when a
    toolspecific tag marks it invisible, or when the name matches
    ``invisible_pattern`` (case-insensitive). The final marking comes from
    ``<finalmarkings>`` when present, otherwise the sink places get one
    token each and a warning is recorded on the net.
    """
    if hasattr(source, "read"):
        data = source.read()
        name = getattr(source, "name", "<stream>")
    else:
        name = str(source)
        with open(source, "rb") as fh:
            data = fh.read()
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise PnmlError(f"{name}: malformed XML at line {exc.position[0]}, "
                        f"column {exc.position[1]}: {exc.msg}") from exc

    nets = [el for el in root.iter() if _local(el.tag) == "net"]
    if not nets:
        raise PnmlError(f"{name}: no <net> element")
    net_el = nets[0]
    invisible_re = re.compile(invisible_pattern, re.IGNORECASE)

    places = []
    transitions = []
    arcs = []
    initial = {}
    warnings = []

    for tag, el in _iter_net_elements(net_el):
        if tag == "place":
            pid = el.get("id")
            if pid is None:
                raise PnmlError("place without id")
            places.append(pid)
            for child in el:
                if _local(child.tag) == "initialMarking":
                    for sub in child.iter():
                        if _local(sub.tag) == "text" and sub.text:
                            initial[pid] = initial.get(pid, 0) + int(sub.text.strip())
        elif tag == "transition":
            tid = el.get("id")
            if tid is None:
                raise PnmlError("transition without id")
            label = _element_name(el)
            invisible = False
            for child in el:
                if _local(child.tag) == "toolspecific":
                    activity = child.get("activity", "")
                    if activity == "$invisible$" or \
                            child.get("invisible", "").lower() == "true":
                        invisible = True
            if label is not None:
                label = label.strip()
            if not label or invisible or invisible_re.match(label or ""):
                label = None
            transitions.append((tid, label))
        else:  # arc
            src, tgt = el.get("source"), el.get("target")
            if src is None or tgt is None:
                raise PnmlError("arc without source/target")
            for child in el:
                if _local(child.tag) == "inscription":
                    for sub in child.iter():
                        if _local(sub.tag) == "text" and sub.text:
                            if int(sub.text.strip()) > 1:
                                raise PnmlError(
                                    f"arc {src!r}->{tgt!r} has weight > 1 "
                                    "(weighted arcs are unsupported)")
            arcs.append((src, tgt))

    final = {}
    for el in net_el.iter():
        if _local(el.tag) == "finalmarkings":
            markings = [m for m in el if _local(m.tag) == "marking"]
            if len(markings) > 1:
                warnings.append("multiple final markings declared; using the first")
            if markings:
                for place_el in markings[0]:
                    if _local(place_el.tag) != "place":
                        continue
                    pid = place_el.get("idref")
                    tokens = 1
                    for sub in place_el.iter():
                        if _local(sub.tag) == "text" and sub.text:
                            tokens = int(sub.text.strip())
                    if tokens:
                        final[pid] = tokens
            break

    net_name = _element_name(net_el) or net_el.get("id") or name
    if not final:
        sinks = [p for p in places if p not in {s for s, _ in arcs}]
        final = {p: 1 for p in sinks}
        warnings.append("no <finalmarkings> in PNML; inferred one token on "
                        f"each sink place: {sorted(final) or 'none'}")
    return PetriNet(places, transitions, arcs, initial, final,
                    name=net_name, warnings=warnings)
