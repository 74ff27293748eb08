"""Optimal model-trace alignments.

Uniform-cost search over the synchronous product (marking x trace
position). Among equal-cost alignments a fixed lexicographic preference
(sync, then hidden model move, then visible model move, then log move;
ties by transition id) selects a unique result, so downstream choice
sequences are reproducible. A search can also report whether another
optimal alignment exists ("ambiguous"), which matters because the chosen
branch at a decision place may differ between optimal alignments.
"""

from __future__ import annotations

import heapq
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

from .eventlog import EventLog, Trace
from .petri import Marking, PetriNet

__all__ = [
    "SYNC", "LOG_ONLY", "MODEL_ONLY",
    "Move", "Alignment", "CostScheme", "BatchResult", "AlignmentIssue",
    "UnalignableError", "BudgetExceededError",
    "align", "align_log", "model_projection", "log_projection",
    "cheapest_model_cost", "alignment_to_dict", "alignment_from_dict",
]

SYNC = "sync"
LOG_ONLY = "log_only"
MODEL_ONLY = "model_only"

DEFAULT_STATE_BUDGET = 1_000_000
_BUDGET_ENV = "BRANCHDRIFT_STATE_BUDGET"


class UnalignableError(RuntimeError):
    """The final marking cannot be reached for this trace."""


class BudgetExceededError(RuntimeError):
    """The per-trace state budget was exhausted before an answer was found."""

    def __init__(self, case_id, budget):
        super().__init__(f"trace {case_id!r}: state budget of {budget} "
                         "explored states exceeded")
        self.budget = budget


@dataclass(frozen=True)
class Move:
    kind: str                          # SYNC | LOG_ONLY | MODEL_ONLY
    event_index: Optional[int] = None  # position in the trace
    transition: Optional[str] = None
    cost: float = 0.0

    def __post_init__(self):
        if self.kind == SYNC and (self.event_index is None or self.transition is None):
            raise ValueError("sync move needs event_index and transition")
        if self.kind == LOG_ONLY and (self.event_index is None or self.transition is not None):
            raise ValueError("log move carries only an event_index")
        if self.kind == MODEL_ONLY and (self.transition is None or self.event_index is not None):
            raise ValueError("model move carries only a transition")
        if self.cost < 0:
            raise ValueError("move cost must be non-negative")


@dataclass(frozen=True)
class Alignment:
    case_id: str
    moves: tuple  # tuple[Move, ...]
    total_cost: float
    ambiguous: bool = False  # another optimal alignment exists
    explored: int = 0        # states popped by the search


@dataclass(frozen=True)
class CostScheme:
    sync_cost: float = 0.0
    hidden_model_cost: float = 0.0
    visible_model_cost: float = 1.0
    log_cost: float = 1.0

    def __post_init__(self):
        values = (self.sync_cost, self.hidden_model_cost,
                  self.visible_model_cost, self.log_cost)
        if any(v < 0 for v in values):
            raise ValueError("alignment costs must be non-negative")
        if any(self.sync_cost > v for v in values):
            raise ValueError("sync_cost must not exceed any other cost")


@dataclass(frozen=True)
class AlignmentIssue:
    case_id: str
    error: str
    detail: str


@dataclass
class BatchResult:
    alignments: list  # successful alignments, input trace order
    errors: list      # list[AlignmentIssue]


def model_projection(alignment: Alignment):
    return tuple(m.transition for m in alignment.moves if m.transition is not None)


def log_projection(alignment: Alignment):
    return tuple(m.event_index for m in alignment.moves if m.event_index is not None)


def default_state_budget() -> int:
    raw = os.environ.get(_BUDGET_ENV)
    if raw:
        return int(float(raw))
    return DEFAULT_STATE_BUDGET


class _CompiledNet:
    """Net recast into dense index arrays for the product search."""

    def __init__(self, net: PetriNet, costs: CostScheme):
        self.net = net
        self.costs = costs
        self.place_index = {p: i for i, p in enumerate(net.places)}
        # sorted by transition id: fixes the tie-break order
        self.tids = sorted(net.transitions)
        self.pre = []
        self.post = []
        self.labels = []
        self.move_cost = []
        self.move_key = []
        for rank, tid in enumerate(self.tids):
            self.pre.append(tuple(self.place_index[p] for p in net.preset(tid)))
            self.post.append(tuple(self.place_index[p] for p in net.postset(tid)))
            label = net.label(tid)
            self.labels.append(label)
            hidden = label is None
            self.move_cost.append(costs.hidden_model_cost if hidden
                                  else costs.visible_model_cost)
            self.move_key.append((1, rank) if hidden else (2, rank))
        self.initial = self._dense(net.initial_marking)
        self.final = self._dense(net.final_marking)

    def _dense(self, marking: Marking):
        counts = [0] * len(self.net.places)
        for p, n in marking.items():
            counts[self.place_index[p]] = n
        return tuple(counts)

    def fire_dense(self, marking, t_index):
        counts = list(marking)
        for p in self.pre[t_index]:
            counts[p] -= 1
        for p in self.post[t_index]:
            counts[p] += 1
        return tuple(counts)

    def enabled_dense(self, marking, t_index) -> bool:
        pre = self.pre[t_index]
        return bool(pre) and all(marking[p] >= 1 for p in pre)


def _search(compiled: _CompiledNet, activities, case_id, state_budget,
            detect_ambiguity):
    """Dijkstra with lexicographic tie-break over the product state space.

    Returns (total_cost, moves, ambiguous, explored). The search closes
    every state with distance <= optimum so ambiguity can be decided on the
    tight-edge graph afterwards.
    """
    costs = compiled.costs
    n_events = len(activities)
    start = (compiled.initial, 0)
    goal = (compiled.final, n_events)
    log_key = (3, 0)

    def successors(state):
        marking, pos = state
        if pos < n_events:
            yield log_key, costs.log_cost, (marking, pos + 1), \
                Move(LOG_ONLY, event_index=pos, cost=costs.log_cost)
        for t_index in range(len(compiled.tids)):
            if not compiled.enabled_dense(marking, t_index):
                continue
            fired = compiled.fire_dense(marking, t_index)
            label = compiled.labels[t_index]
            if pos < n_events and label == activities[pos]:
                yield (0, t_index), costs.sync_cost, (fired, pos + 1), \
                    Move(SYNC, event_index=pos,
                         transition=compiled.tids[t_index], cost=costs.sync_cost)
            yield compiled.move_key[t_index], compiled.move_cost[t_index], \
                (fired, pos), \
                Move(MODEL_ONLY, transition=compiled.tids[t_index],
                     cost=compiled.move_cost[t_index])

    heap = [(0.0, (), start, None)]  # cost, path key, state, (move, parent) chain
    best_pushed = {start: (0.0, ())}
    closed = {}
    explored = 0
    c_star = None
    goal_node = None

    while heap:
        cost, key, state, node = heapq.heappop(heap)
        if c_star is not None and cost > c_star:
            break
        if state in closed:
            continue
        closed[state] = cost
        explored += 1
        if explored > state_budget:
            raise BudgetExceededError(case_id, state_budget)
        if state == goal and c_star is None:
            c_star = cost
            goal_node = node
            if not detect_ambiguity:
                break
        for move_key, move_cost, nxt, move in successors(state):
            new_cost = cost + move_cost
            if c_star is not None and new_cost > c_star:
                continue
            if nxt in closed:
                continue
            new_key = key + (move_key,)
            seen = best_pushed.get(nxt)
            if seen is None or (new_cost, new_key) < seen:
                best_pushed[nxt] = (new_cost, new_key)
                heapq.heappush(heap, (new_cost, new_key, nxt, (move, node)))

    if c_star is None:
        raise UnalignableError(
            f"trace {case_id!r}: final marking unreachable "
            f"({explored} states explored)")

    moves = []
    node = goal_node
    while node is not None:
        moves.append(node[0])
        node = node[1]
    moves.reverse()

    ambiguous = False
    if detect_ambiguity:
        ambiguous = _has_second_optimal_path(
            compiled, activities, closed, start, goal, c_star, successors)
    return c_star, tuple(moves), ambiguous, explored


def _has_second_optimal_path(compiled, activities, closed, start, goal,
                             c_star, successors, expansion_cap=100_000):
    """True when >= 2 distinct optimal move sequences reach the goal.

    DFS over tight edges (dist[u] + w == dist[v]) counting simple paths,
    stopping as soon as two are found. The cap guards pathological nets;
    hitting it reports ambiguity (the conservative answer).
    """
    if start == goal:
        pass  # fall through; loops may still produce a second path
    found = 0
    expansions = 0
    on_path = set()

    def dfs(state, cost):
        nonlocal found, expansions
        if found >= 2 or expansions > expansion_cap:
            found = 2
            return
        if state == goal and cost == c_star:
            found += 1
            if found >= 2:
                return
        on_path.add(state)
        for _, move_cost, nxt, _move in successors(state):
            expansions += 1
            if nxt in on_path or nxt not in closed:
                continue
            new_cost = cost + move_cost
            if new_cost != closed[nxt]:
                continue
            dfs(nxt, new_cost)
            if found >= 2:
                break
        on_path.discard(state)

    dfs(start, 0.0)
    return found >= 2


def align(net: PetriNet, trace: Trace, costs: CostScheme = CostScheme(),
          state_budget: Optional[int] = None,
          detect_ambiguity: bool = True) -> Alignment:
    """Minimal-cost alignment of one trace against the net.

    Raises UnalignableError when the final marking is unreachable and
    BudgetExceededError when the state budget runs out.
    """
    if state_budget is None:
        state_budget = default_state_budget()
    compiled = _CompiledNet(net, costs)
    activities = tuple(ev.activity for ev in trace.events)
    cost, moves, ambiguous, explored = _search(
        compiled, activities, trace.case_id, state_budget, detect_ambiguity)
    return Alignment(trace.case_id, moves, cost, ambiguous, explored)


def _align_variant(args):
    compiled, activities, state_budget, detect_ambiguity = args
    try:
        cost, moves, ambiguous, explored = _search(
            compiled, activities, "<variant>", state_budget, detect_ambiguity)
        return ("ok", (cost, moves, ambiguous, explored))
    except UnalignableError as exc:
        return ("unalignable", str(exc))
    except BudgetExceededError as exc:
        return ("budget", str(exc))


def align_log(net: PetriNet, log: EventLog, costs: CostScheme = CostScheme(),
              jobs: int = 1, fail_fast: bool = False,
              state_budget: Optional[int] = None,
              detect_ambiguity: bool = True) -> BatchResult:
    """Align every trace; output order equals input order.

    Traces with the same activity sequence share one search (the alignment
    depends only on activities). With jobs > 1 distinct variants are solved
    in parallel; results are identical to the sequential run.
    """
    if state_budget is None:
        state_budget = default_state_budget()
    compiled = _CompiledNet(net, costs)

    variants = {}
    for trace in log.traces:
        variants.setdefault(tuple(ev.activity for ev in trace.events), None)
    keys = list(variants)

    if jobs > 1 and len(keys) > 1:
        work = [(compiled, key, state_budget, detect_ambiguity) for key in keys]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, result in zip(keys, pool.map(_align_variant, work)):
                variants[key] = result
    else:
        for key in keys:
            variants[key] = _align_variant(
                (compiled, key, state_budget, detect_ambiguity))

    alignments = []
    errors = []
    for trace in log.traces:
        status, payload = variants[tuple(ev.activity for ev in trace.events)]
        if status == "ok":
            cost, moves, ambiguous, explored = payload
            alignments.append(Alignment(trace.case_id, moves, cost,
                                        ambiguous, explored))
        else:
            issue = AlignmentIssue(trace.case_id, status,
                                   payload.replace("'<variant>'",
                                                   repr(trace.case_id)))
            if fail_fast:
                if status == "unalignable":
                    raise UnalignableError(issue.detail)
                raise BudgetExceededError(trace.case_id, state_budget)
            errors.append(issue)
    return BatchResult(alignments, errors)


def cheapest_model_cost(net: PetriNet, costs: CostScheme = CostScheme(),
                        state_budget: Optional[int] = None) -> float:
    """Cost of the cheapest pure-model path from initial to final marking."""
    if state_budget is None:
        state_budget = default_state_budget()
    compiled = _CompiledNet(net, costs)
    cost, _, _, _ = _search(compiled, (), "<model>", state_budget,
                            detect_ambiguity=False)
    return cost


def alignment_to_dict(alignment: Alignment) -> dict:
    return {
        "case_id": alignment.case_id,
        "cost": alignment.total_cost,
        "ambiguous": alignment.ambiguous,
        "moves": [
            {"kind": m.kind, "event_index": m.event_index,
             "transition": m.transition, "cost": m.cost}
            for m in alignment.moves
        ],
    }


def alignment_from_dict(data: dict) -> Alignment:
    moves = tuple(Move(m["kind"], m.get("event_index"),
                       m.get("transition"), m.get("cost", 0.0))
                  for m in data["moves"])
    return Alignment(data["case_id"], moves, data["cost"],
                     data.get("ambiguous", False))
