"""Synthetic event logs with a known branching schedule.

Traces are simulated by random firing of an acyclic WF-net; at one chosen
decision place the branch is drawn from a per-phase probability vector, so
the true change indices are known exactly. Trace i starts at
start + i * inter_arrival and its events are one second apart, which makes
change timestamps analytically known. The generator is fully deterministic
given a seed (stdlib Mersenne Twister).
"""

from __future__ import annotations

import bisect
import json
import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Optional

from .eventlog import Event, EventLog, Trace
from .petri import PetriNet, decision_places

__all__ = [
    "Phase",
    "BranchSchedule",
    "GenerationError",
    "load_schedule",
    "schedule_from_dict",
    "generate",
]

DEFAULT_START = datetime(2000, 1, 1, tzinfo=timezone.utc)


class GenerationError(ValueError):
    """Unusable net or schedule for simulation."""


@dataclass(frozen=True)
class Phase:
    traces: int
    probs: tuple  # probability per arc label 1..k

    def __post_init__(self):
        if self.traces <= 0:
            raise ValueError("phase trace count must be positive")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError(f"phase probabilities sum to {sum(self.probs)}, not 1")
        if any(p < 0 for p in self.probs):
            raise ValueError("phase probabilities must be non-negative")


@dataclass(frozen=True)
class BranchSchedule:
    place: str
    phases: tuple  # tuple[Phase, ...]
    seed: int = 0


def schedule_from_dict(data: dict) -> BranchSchedule:
    """Schema: {"place": str, "seed": int,
    "phases": [{"traces": int, "probs": [float, ...]}, ...]}"""
    try:
        phases = tuple(Phase(int(p["traces"]), tuple(float(x) for x in p["probs"]))
                       for p in data["phases"])
        return BranchSchedule(str(data["place"]), phases, int(data.get("seed", 0)))
    except (KeyError, TypeError) as exc:
        raise GenerationError(f"bad schedule document: {exc}") from exc


def load_schedule(path) -> BranchSchedule:
    with open(path, "r", encoding="utf-8") as fh:
        return schedule_from_dict(json.load(fh))


def _has_cycle(net: PetriNet) -> bool:
    nodes = list(net.places) + list(net.transition_order)
    succ = {n: [] for n in nodes}
    for src, tgt in net.arcs:
        succ[src].append(tgt)
    state = {}  # 1 = on stack, 2 = done
    for start in nodes:
        if state.get(start):
            continue
        stack = [(start, iter(succ[start]))]
        state[start] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if state.get(nxt) == 1:
                    return True
                if not state.get(nxt):
                    state[nxt] = 1
                    stack.append((nxt, iter(succ[nxt])))
                    advanced = True
                    break
            if not advanced:
                state[node] = 2
                stack.pop()
    return False


def generate(net: PetriNet, schedule: BranchSchedule,
             inter_arrival: float = 60.0, seed: Optional[int] = None,
             start: datetime = DEFAULT_START):
    """Simulate the schedule; returns (EventLog, change element indices).

    The scheduled place's branch transitions must all be enabled whenever a
    token arrives there; cyclic nets are rejected.
    """
    if _has_cycle(net):
        raise GenerationError("net contains a cycle; generation supports "
                              "acyclic nets only")
    interesting = {ip.place: ip for ip in decision_places(net)}
    place = interesting.get(schedule.place)
    if place is None:
        raise GenerationError(
            f"schedule place {schedule.place!r} is not a decision place; "
            f"valid: {sorted(interesting) or 'none'}")
    k = place.k
    for phase in schedule.phases:
        if len(phase.probs) != k:
            raise GenerationError(
                f"phase has {len(phase.probs)} probabilities but place "
                f"{place.place!r} has {k} outgoing arcs")
    if inter_arrival <= 0:
        raise GenerationError("inter_arrival must be positive")
    if start.tzinfo is None:
        raise GenerationError("start timestamp must be timezone-aware")

    rng = random.Random(schedule.seed if seed is None else seed)
    total_traces = sum(p.traces for p in schedule.phases)
    width = len(str(total_traces))
    branch_by_label = {label: tid for tid, label in place.arc_labels}

    traces = []
    change_indices = []
    draws = 0
    trace_no = 0
    for phase_no, phase in enumerate(schedule.phases):
        if phase_no > 0:
            change_indices.append(draws)
        cumulative = []
        acc = 0.0
        for p in phase.probs:
            acc += p
            cumulative.append(acc)
        for _ in range(phase.traces):
            trace_start = start + timedelta(seconds=trace_no * inter_arrival)
            events = []
            marking = net.initial_marking
            steps = 0
            while marking != net.final_marking:
                steps += 1
                if steps > 10_000:
                    raise GenerationError("simulation did not reach the final "
                                          "marking (net may be unsound)")
                enabled = sorted(net.enabled(marking))
                if not enabled:
                    raise GenerationError(
                        f"deadlock in marking {marking!r}; cannot complete trace")
                if marking[place.place] >= 1:
                    missing = [t for t in branch_by_label.values()
                               if t not in enabled]
                    if missing:
                        raise GenerationError(
                            f"branch transitions {missing} not enabled when a "
                            f"token reached {place.place!r}")
                    u = rng.random()
                    idx = bisect.bisect_right(cumulative, u)
                    if idx >= k:  # cumulative[-1] slightly below 1.0
                        idx = max(i for i, p in enumerate(phase.probs) if p > 0)
                    fired = branch_by_label[idx + 1]
                    draws += 1
                else:
                    fired = enabled[0] if len(enabled) == 1 else rng.choice(enabled)
                activity = net.label(fired)
                if activity is not None:
                    events.append(Event(
                        activity,
                        trace_start + timedelta(seconds=len(events))))
                marking = net.fire(marking, fired)
            trace_no += 1
            traces.append(Trace(f"case_{trace_no:0{width}d}", tuple(events)))

    _check_strictly_increasing(traces, inter_arrival)
    log = EventLog(tuple(traces),
                   source=f"synthetic:seed={schedule.seed if seed is None else seed}")
    return log, tuple(change_indices)


def _check_strictly_increasing(traces, inter_arrival):
    last = None
    for trace in traces:
        if not trace.events:
            continue
        first = trace.events[0].timestamp
        if last is not None and first <= last:
            raise GenerationError(
                "inter_arrival too small: trace timestamps overlap "
                f"(increase beyond {inter_arrival})")
        last = trace.events[-1].timestamp
