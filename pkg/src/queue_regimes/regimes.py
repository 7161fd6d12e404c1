"""Concrete regimes: FCFS, LCFS with and without preemption, priority slots,
the score regime, and regimes read from a JSON transition table."""

from __future__ import annotations

import json
from bisect import bisect_left
from pathlib import Path
from typing import Any

from .core import ContractViolation, ParseError, Regime, Violation, contract_violations


class _CountRegime(Regime):
    """State is the number of customers; only the placement rule differs."""

    def idle(self) -> int:
        return 0

    def count(self, x: int) -> int:
        return x

    def alpha(self, x: int) -> int:
        return x + 1

    def xi(self, x: int) -> int:
        return x - 1

    def rho(self, x: int, i: int) -> int:
        return x - 1

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))


class Fcfs(_CountRegime):
    name = "fcfs"

    def pi(self, x: int) -> int:
        return x + 1


class LcfsPreemptive(_CountRegime):
    name = "lcfs-pr"

    def pi(self, x: int) -> int:
        return 1


class LcfsNonPreemptive(_CountRegime):
    name = "lcfs-np"

    def pi(self, x: int) -> int:
        return min(2, x + 1)


class PrioritySlots(Regime):
    """Occupied slot numbers, sorted.  Slots are numbered from 1.

    A newcomer takes the lowest free slot; the lowest occupied slot is in
    service.  Positions are ranks among occupied slots.
    """

    name = "priority-slots"

    def idle(self) -> tuple[int, ...]:
        return ()

    def count(self, x: tuple[int, ...]) -> int:
        return len(x)

    @staticmethod
    def free_slot(x: tuple[int, ...]) -> int:
        slot = 1
        for s in x:
            if s != slot:
                break
            slot += 1
        return slot

    def alpha(self, x):
        slot = self.free_slot(x)
        k = bisect_left(x, slot)
        return x[:k] + (slot,) + x[k:]

    def pi(self, x) -> int:
        return bisect_left(x, self.free_slot(x)) + 1

    def xi(self, x):
        return x[1:]

    def rho(self, x, i):
        return x[: i - 1] + x[i:]

    def key(self, x) -> str:
        return "{" + ",".join(map(str, x)) + "}"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))


class ScoreRegime(Regime):
    """Each customer carries the count seen on arrival; lower scores go first.

    The newcomer is inserted after the last customer whose score is below
    the current count, so ties keep arrival order.
    """

    name = "score"

    def idle(self) -> tuple[int, ...]:
        return ()

    def count(self, x) -> int:
        return len(x)

    @staticmethod
    def last_ahead(x: tuple[int, ...]) -> int:
        # scores are sorted, so the number of entries below n is the last index with p_i < n
        return bisect_left(x, len(x))

    def alpha(self, x):
        k = self.last_ahead(x)
        return x[:k] + (len(x),) + x[k:]

    def pi(self, x) -> int:
        return self.last_ahead(x) + 1

    def xi(self, x):
        return x[1:]

    def rho(self, x, i):
        return x[: i - 1] + x[i:]

    def key(self, x) -> str:
        return "(" + ",".join(map(str, x)) + ")"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(type(self))


def fcfs() -> Fcfs:
    return Fcfs()


def lcfs_pr() -> LcfsPreemptive:
    return LcfsPreemptive()


def lcfs_np() -> LcfsNonPreemptive:
    return LcfsNonPreemptive()


def priority_slots() -> PrioritySlots:
    return PrioritySlots()


def score_regime() -> ScoreRegime:
    return ScoreRegime()


BUILTIN = {
    "fcfs": fcfs,
    "lcfs-pr": lcfs_pr,
    "lcfs-np": lcfs_np,
    "priority-slots": priority_slots,
    "score": score_regime,
}


class TableRegime(Regime):
    """Regime given by explicit finite transition tables keyed by state id.

    States at the largest listed count may omit ``alpha``: the table is then
    a truncation and arrivals are undefined there (``capacity``).
    """

    def __init__(self, idle: str, counts: dict[str, int], alpha: dict[str, tuple[str, int]],
                 xi: dict[str, str], rho: dict[str, list[str]], name: str = "table"):
        self.name = name
        self._idle = idle
        self.counts = counts
        self._alpha = alpha
        self._xi = xi
        self._rho = rho
        top = max(counts.values())
        self.capacity = top if any(s not in alpha for s in counts) else None

    @property
    def states(self) -> list[str]:
        return list(self.counts)

    def idle(self) -> str:
        return self._idle

    def count(self, x: str) -> int:
        return self.counts[x]

    def alpha(self, x: str) -> str:
        return self._alpha[x][0]

    def pi(self, x: str) -> int:
        return self._alpha[x][1]

    def xi(self, x: str) -> str:
        return self._xi[x]

    def rho(self, x: str, i: int) -> str:
        return self._rho[x][i - 1]

    def key(self, x: str) -> str:
        return x


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ParseError(msg)


def validate_table(raw: dict[str, Any], name: str = "table") -> TableRegime:
    """Build a :class:`TableRegime` from a parsed JSON description.

    Raises :class:`ParseError` when the document does not follow the schema
    and :class:`ContractViolation` (listing every broken law) when the
    transitions break the regime contract.
    """
    _require(isinstance(raw, dict), "table must be a JSON object")
    for field in ("idle", "states", "alpha", "xi", "rho"):
        _require(field in raw, f"missing field {field!r}")
    states = raw["states"]
    _require(isinstance(states, dict) and states, "'states' must be a non-empty object")
    counts: dict[str, int] = {}
    for sid, body in states.items():
        _require(isinstance(body, dict) and isinstance(body.get("count"), int) and not isinstance(body.get("count"), bool),
                 f"state {sid!r} needs an integer 'count'")
        counts[sid] = body["count"]
    idle = raw["idle"]
    _require(isinstance(idle, str), "'idle' must be a state id")
    for field in ("alpha", "xi", "rho"):
        _require(isinstance(raw[field], dict), f"{field!r} must be an object")

    problems: list[Violation] = []

    def known(sid, where):
        if not isinstance(sid, str) or sid not in counts:
            problems.append(Violation("missing-transition", where[0], f"{where[1]} refers to unknown state {sid!r}"))
            return False
        return True

    if idle not in counts:
        raise ContractViolation("unique-idle", idle, "idle state is not listed")
    if counts[idle] != 0:
        problems.append(Violation("unique-idle", idle, "idle state must have count 0"))
    for sid, n in counts.items():
        if n < 0:
            problems.append(Violation("count", sid, f"negative count {n}"))
        elif n == 0 and sid != idle:
            problems.append(Violation("unique-idle", sid, "second state with count 0"))

    top = max(counts.values())
    alpha: dict[str, tuple[str, int]] = {}
    for sid, entry in raw["alpha"].items():
        if sid not in counts:
            problems.append(Violation("missing-transition", sid, "alpha given for an unknown state"))
            continue
        _require(isinstance(entry, dict) and "to" in entry and isinstance(entry.get("position"), int),
                 f"alpha[{sid!r}] must be {{'to': id, 'position': int}}")
        if known(entry["to"], (sid, "alpha")):
            alpha[sid] = (entry["to"], entry["position"])
    for sid, n in counts.items():
        if sid not in alpha and n < top and sid not in raw["alpha"]:
            problems.append(Violation("missing-transition", sid, "alpha undefined below the top count"))

    xi: dict[str, str] = {}
    for sid, n in counts.items():
        if n >= 1:
            if sid not in raw["xi"]:
                problems.append(Violation("missing-transition", sid, "xi undefined"))
            elif known(raw["xi"][sid], (sid, "xi")):
                xi[sid] = raw["xi"][sid]

    rho: dict[str, list[str]] = {}
    for sid, n in counts.items():
        if n == 0:
            continue
        row = raw["rho"].get(sid)
        if not isinstance(row, list) or len(row) != n:
            problems.append(Violation("missing-transition", sid, f"rho needs a list of {n} successors"))
            continue
        if all(known(t, (sid, f"rho[{k}]")) for k, t in enumerate(row)):
            rho[sid] = list(row)

    if problems:
        raise ContractViolation(problems[0].law, problems[0].state, problems[0].detail, problems)

    regime = TableRegime(idle, counts, alpha, xi, rho, name=name)
    problems = contract_violations(regime, counts)
    if problems:
        raise ContractViolation(problems[0].law, problems[0].state, problems[0].detail, problems)
    return regime


def load_table(path: str | Path) -> TableRegime:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read table regime {path}: {exc}") from exc
    return validate_table(raw, name=f"table:{path.name}")


def get_regime(selector: str) -> Regime:
    """Resolve a CLI-style selector (``fcfs``, ``score``, ``table:<path>``...)."""
    if selector.startswith("table:"):
        return load_table(selector[len("table:"):])
    try:
        return BUILTIN[selector]()
    except KeyError:
        raise ParseError(f"unknown regime {selector!r}; choose one of {sorted(BUILTIN)} or table:<path>") from None


def table_from_regime(regime: Regime, max_n: int) -> dict[str, Any]:
    """Export the reachable part of ``regime`` (count at most ``max_n``) in table form."""
    from .analysis import build_state_graph

    graph = build_state_graph(regime, max_n)
    key = regime.key
    doc: dict[str, Any] = {"idle": key(regime.idle()), "states": {}, "alpha": {}, "xi": {}, "rho": {}}
    for x in graph.nodes:
        n = regime.count(x)
        doc["states"][key(x)] = {"count": n}
        if n < max_n:
            doc["alpha"][key(x)] = {"to": key(regime.alpha(x)), "position": regime.pi(x)}
        if n:
            doc["xi"][key(x)] = key(regime.xi(x))
            doc["rho"][key(x)] = [key(regime.rho(x, i)) for i in range(1, n + 1)]
    return doc
