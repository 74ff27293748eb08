"""Choice sequences: which outgoing arc a decision place took, and when.

Scanning each alignment's model projection, every adjacent pair of model
moves (m1, m2) with m1 in the incoming and m2 in the outgoing transitions
of the place records one traversal, labeled with m2's arc label. Log-only
moves never break adjacency (they are invisible to the model). The
traversal timestamp is the event of the closest event-carrying move at or
before m1; when none exists the trace's first event is used and flagged.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Optional

from .alignment import Alignment
from .eventlog import EventLog
from .petri import InterestingPlace

__all__ = [
    "ChoiceElement",
    "ChoiceSequence",
    "ChoiceDiagnostics",
    "extract",
    "diagnostics",
]


@dataclass(frozen=True)
class ChoiceElement:
    label: int                   # arc label 1..k
    timestamp: datetime
    case_id: str
    model_move_position: int     # index of m2 within the model projection
    fallback_timestamp: bool = False
    from_ambiguous_alignment: bool = False


@dataclass(frozen=True)
class ChoiceSequence:
    place: InterestingPlace
    elements: tuple              # tuple[ChoiceElement, ...], time-ordered
    traces_seen: int = 0
    matched_pairs: int = 0       # traversals found, including skipped ones
    produced_tokens: int = 0     # firings of incoming transitions
    skipped_no_timestamp: int = 0
    initial_tokens: int = 0      # tokens already in the place at start

    def labels(self):
        return [e.label for e in self.elements]


@dataclass(frozen=True)
class ChoiceDiagnostics:
    place: str
    elements: int
    label_counts: tuple              # ((label, count), ...) for 1..k
    traversal_trace_ratio: float
    fallback_timestamp_count: int
    ambiguous_alignment_count: int
    skipped_no_timestamp: int
    missed_traversals: int           # tokens produced minus pairs matched
    initial_tokens: int


def extract(place: InterestingPlace, alignments: Iterable[Alignment],
            log: EventLog, initial_tokens: int = 0) -> ChoiceSequence:
    """Build the time-ordered choice sequence of one place.

    ``alignments`` must come from the same net the place was discovered
    on; ``log`` supplies the event timestamps by case id.
    """
    traces = log.trace_by_case()
    incoming = place.incoming_transitions
    outgoing = place.outgoing_transitions
    label_by_tid = dict(place.arc_labels)

    elements = []
    matched = 0
    produced = 0
    skipped = 0
    seen = 0

    for alignment in alignments:
        seen += 1
        trace = traces.get(alignment.case_id)
        if trace is None:
            raise KeyError(f"alignment case {alignment.case_id!r} not in log")
        moves = alignment.moves

        # last event-carrying move at or before each position
        last_event = [None] * len(moves)
        current = None
        for i, move in enumerate(moves):
            if move.event_index is not None:
                current = move.event_index
            last_event[i] = current

        projection = [(i, move) for i, move in enumerate(moves)
                      if move.transition is not None]
        for j in range(len(projection) - 1):
            pos1, m1 = projection[j]
            _, m2 = projection[j + 1]
            if m1.transition in incoming:
                produced += 1
            if m1.transition not in incoming or m2.transition not in outgoing:
                continue
            matched += 1
            event_idx = last_event[pos1]
            fallback = False
            if event_idx is None:
                if not trace.events:
                    skipped += 1
                    continue
                event_idx = 0
                fallback = True
            elements.append(ChoiceElement(
                label=label_by_tid[m2.transition],
                timestamp=trace.events[event_idx].timestamp,
                case_id=alignment.case_id,
                model_move_position=j + 1,
                fallback_timestamp=fallback,
                from_ambiguous_alignment=alignment.ambiguous,
            ))
        # the final projection move can still produce a token into the place
        if projection and projection[-1][1].transition in incoming:
            produced += 1

    elements.sort(key=lambda e: (e.timestamp, e.case_id, e.model_move_position))
    return ChoiceSequence(
        place=place,
        elements=tuple(elements),
        traces_seen=seen,
        matched_pairs=matched,
        produced_tokens=produced,
        skipped_no_timestamp=skipped,
        initial_tokens=initial_tokens,
    )


def diagnostics(seq: ChoiceSequence) -> ChoiceDiagnostics:
    counts = {label: 0 for _, label in seq.place.arc_labels}
    fallback = 0
    ambiguous = 0
    for el in seq.elements:
        counts[el.label] += 1
        fallback += el.fallback_timestamp
        ambiguous += el.from_ambiguous_alignment
    ratio = len(seq.elements) / seq.traces_seen if seq.traces_seen else 0.0
    return ChoiceDiagnostics(
        place=seq.place.place,
        elements=len(seq.elements),
        label_counts=tuple(sorted(counts.items())),
        traversal_trace_ratio=ratio,
        fallback_timestamp_count=fallback,
        ambiguous_alignment_count=ambiguous,
        skipped_no_timestamp=seq.skipped_no_timestamp,
        missed_traversals=seq.produced_tokens - seq.matched_pairs,
        initial_tokens=seq.initial_tokens,
    )
