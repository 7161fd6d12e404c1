"""Bounded reachability analysis of a regime.

The state graph is the closure of the idle state under arrivals, services
and single reneges, with arrivals suppressed once the count reaches the
bound.  On top of it:

* ``ancestor_max_count`` computes, for each non-idle state, the largest
  count seen on any arrival/service path through non-idle states that ends
  there (a least fixpoint over the graph),
* a state is maximal (relative to the bound) when that number is its own
  count,
* ``check_universal_optimality`` looks for non-maximal states where the
  newcomer is put at the back of the queue.

Verdicts are exact when a violation is found (a witness path is returned
and can be replayed) and only bound-relative otherwise.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

from .core import NodeCapExceeded, Regime, State

DEFAULT_MAX_N = 8
DEFAULT_NODE_CAP = 100_000


@dataclass(frozen=True)
class Edge:
    source: State
    label: str  # "arrival", "service" or "renege:<i>"
    target: State


@dataclass
class StateGraph:
    regime: Regime
    bound: int
    nodes: list[State]
    edges: list[Edge]
    index: dict[State, int] = field(repr=False)

    def __contains__(self, x: State) -> bool:
        return x in self.index

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def idle(self) -> State:
        return self.regime.idle()

    def step_edges(self) -> Iterator[Edge]:
        """Arrival and service edges between non-idle states."""
        count = self.regime.count
        for e in self.edges:
            if e.label in ("arrival", "service") and count(e.source) > 0 and count(e.target) > 0:
                yield e


def _arrival_allowed(regime: Regime, n: int, bound: int) -> bool:
    return n < bound and (regime.capacity is None or n < regime.capacity)


def build_state_graph(regime: Regime, max_n: int = DEFAULT_MAX_N, node_cap: int = DEFAULT_NODE_CAP) -> StateGraph:
    if max_n < 1:
        raise ValueError("max_n must be at least 1")
    start = regime.idle()
    seen = {start}
    queue = deque([start])
    edges: list[Edge] = []
    while queue:
        x = queue.popleft()
        n = regime.count(x)
        succ: list[tuple[str, State]] = []
        if _arrival_allowed(regime, n, max_n):
            succ.append(("arrival", regime.alpha(x)))
        if n > 0:
            succ.append(("service", regime.xi(x)))
            succ.extend((f"renege:{i}", regime.rho(x, i)) for i in range(1, n + 1))
        for label, y in succ:
            edges.append(Edge(x, label, y))
            if y not in seen:
                seen.add(y)
                if len(seen) > node_cap:
                    raise NodeCapExceeded(node_cap)
                queue.append(y)
    nodes = sorted(seen, key=regime.sort_key)
    index = {x: k for k, x in enumerate(nodes)}
    edges.sort(key=lambda e: (index[e.source], e.label, index[e.target]))
    return StateGraph(regime, max_n, nodes, edges, index)


@dataclass(frozen=True)
class AncestorCounts:
    """Fixpoint values plus the predecessor that produced each value."""

    value: dict[State, int]
    via: dict[State, tuple[State, str] | None]

    def __getitem__(self, x: State) -> int:
        return self.value[x]


def ancestor_max_count(graph: StateGraph) -> AncestorCounts:
    regime = graph.regime
    succ: dict[State, list[tuple[State, str]]] = {}
    for e in graph.step_edges():
        succ.setdefault(e.source, []).append((e.target, e.label))
    value = {x: regime.count(x) for x in graph.nodes if regime.count(x) > 0}
    via: dict[State, tuple[State, str] | None] = {x: None for x in value}
    work = deque(x for x in graph.nodes if x in value)
    queued = set(work)
    while work:
        x = work.popleft()
        queued.discard(x)
        for y, label in succ.get(x, ()):
            if value[x] > value[y]:
                value[y] = value[x]
                via[y] = (x, label)
                if y not in queued:
                    queued.add(y)
                    work.append(y)
    return AncestorCounts(value, via)


class Verdict(str, Enum):
    MAXIMAL_UP_TO_BOUND = "MaximalUpToBound"
    NON_MAXIMAL = "NonMaximal"


@dataclass(frozen=True)
class MaximalityVerdict:
    verdict: Verdict
    state: State
    # witness: states x_0 .. x_k = state, labels[j] is the event leading into x_{j+1}
    path: tuple[State, ...] = ()
    labels: tuple[str, ...] = ()

    @property
    def maximal(self) -> bool:
        return self.verdict is Verdict.MAXIMAL_UP_TO_BOUND


def _witness(anc: AncestorCounts, x: State) -> tuple[tuple[State, ...], tuple[str, ...]]:
    path = [x]
    labels: list[str] = []
    target = anc.value[x]
    node = x
    while anc.via[node] is not None:
        prev, label = anc.via[node]
        path.append(prev)
        labels.append(label)
        node = prev
    assert anc.value[node] == target
    path.reverse()
    labels.reverse()
    return tuple(path), tuple(labels)


def is_maximal(graph: StateGraph, x: State, anc: AncestorCounts | None = None) -> MaximalityVerdict:
    """Maximality of ``x`` relative to the graph's bound.

    The idle state counts as maximal: witness paths may not visit it.
    """
    if x not in graph:
        raise KeyError(f"{graph.regime.key(x)} is not in the state graph")
    if graph.regime.count(x) == 0:
        return MaximalityVerdict(Verdict.MAXIMAL_UP_TO_BOUND, x)
    anc = anc if anc is not None else ancestor_max_count(graph)
    if anc.value[x] <= graph.regime.count(x):
        return MaximalityVerdict(Verdict.MAXIMAL_UP_TO_BOUND, x)
    path, labels = _witness(anc, x)
    return MaximalityVerdict(Verdict.NON_MAXIMAL, x, path, labels)


def replay_witness(regime: Regime, verdict: MaximalityVerdict) -> bool:
    """Re-execute a non-maximality witness and check it literally."""
    path, labels = verdict.path, verdict.labels
    if not path or path[-1] != verdict.state or len(labels) != len(path) - 1:
        return False
    if any(regime.count(s) == 0 for s in path):
        return False
    for a, label, b in zip(path, labels, path[1:]):
        step = regime.alpha(a) if label == "arrival" else regime.xi(a) if label == "service" else None
        if step != b:
            return False
    return regime.count(path[0]) > regime.count(verdict.state)


class Outcome(str, Enum):
    VIOLATION_FOUND = "ViolationFound"
    PASS_UP_TO_BOUND = "PassUpToBound"


@dataclass
class OptimalityReport:
    regime: str
    bound: int
    node_count: int
    verdict: Outcome
    violations: list[MaximalityVerdict]
    back_placement_states: list[State]
    preemption_states: list[State]
    maximal_states: list[State]

    @property
    def preemption_exists(self) -> bool:
        """Necessary condition: some non-idle state places newcomers in service."""
        return bool(self.preemption_states)

    def to_dict(self, regime: Regime) -> dict:
        key = regime.key
        return {
            "schema": "queue-regimes/check/v1",
            "regime": self.regime,
            "max_n": self.bound,
            "nodes": self.node_count,
            "verdict": self.verdict.value,
            "violations": [
                {
                    "state": key(v.state),
                    "count": regime.count(v.state),
                    "placement": regime.pi(v.state),
                    "witness": [key(s) for s in v.path],
                    "events": list(v.labels),
                }
                for v in self.violations
            ],
            "back_placement_states": [key(s) for s in self.back_placement_states],
            "maximal_states": [key(s) for s in self.maximal_states],
            "preemption_states": [key(s) for s in self.preemption_states],
            "preemption_exists": self.preemption_exists,
        }


def check_universal_optimality(
    regime: Regime, max_n: int = DEFAULT_MAX_N, node_cap: int = DEFAULT_NODE_CAP,
    graph: StateGraph | None = None,
) -> OptimalityReport:
    graph = graph if graph is not None else build_state_graph(regime, max_n, node_cap)
    anc = ancestor_max_count(graph)
    violations, back, preempt, maximal = [], [], [], []
    for x in graph.nodes:
        n = regime.count(x)
        if n == 0:
            continue
        verdict = is_maximal(graph, x, anc)
        if verdict.maximal:
            maximal.append(x)
        if regime.capacity is not None and n >= regime.capacity:
            continue  # truncated table: no placement defined here
        place = regime.pi(x)
        if place == 1:
            preempt.append(x)
        if place == n + 1:
            back.append(x)
            if not verdict.maximal:
                violations.append(verdict)
    outcome = Outcome.VIOLATION_FOUND if violations else Outcome.PASS_UP_TO_BOUND
    return OptimalityReport(regime.name, graph.bound, len(graph), outcome, violations, back, preempt, maximal)


def to_dot(graph: StateGraph, report: OptimalityReport | None = None) -> str:
    """DOT rendering: maximal states are boxes, back-placement states are
    filled, violating states are drawn in red."""
    regime = graph.regime
    report = report if report is not None else check_universal_optimality(regime, graph=graph)
    maximal = set(report.maximal_states)
    back = set(report.back_placement_states)
    bad = {v.state for v in report.violations}
    lines = [f'digraph "{regime.name}" {{', "  rankdir=LR;"]
    for k, x in enumerate(graph.nodes):
        attrs = [f'label="{regime.key(x)}\\nn={regime.count(x)}"']
        attrs.append("shape=box" if x in maximal or regime.count(x) == 0 else "shape=ellipse")
        if x in back:
            attrs.append('style=filled fillcolor="lightgrey"')
        if x in bad:
            attrs.append('color="red"')
        lines.append(f"  s{k} [{' '.join(attrs)}];")
    style = {"arrival": "solid", "service": "dashed"}
    for e in graph.edges:
        s, t = graph.index[e.source], graph.index[e.target]
        lines.append(f'  s{s} -> s{t} [label="{e.label}" style={style.get(e.label, "dotted")}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
