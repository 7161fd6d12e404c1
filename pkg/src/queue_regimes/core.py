"""Queueing-regime contract for a single-server observable queue.

A regime fixes how customers are ordered.  It is described by

  * a set of states, each carrying a customer count ``n(x)``; the idle
    state is the only state with count 0,
  * ``alpha(x)``: state after an arrival,
  * ``xi(x)``: state after the customer in service completes,
  * ``rho(x, i)``: state after the customer at position ``i`` reneges,
  * ``pi(x)``: queue position (1 = in service) the arriving customer gets.

Positions are 1-based throughout.  Events never reorder the customers that
are already present, so a tagged customer's position can be tracked from
the event alone (see :func:`track_position`).

States are plain hashable Python values chosen by each regime (an ``int``
for the count-only regimes, a tuple for the slot and score regimes, a
string id for table regimes).  ``Regime.key`` gives the canonical text form
used for ordering, reports and DOT output.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Hashable, Iterable, Literal, Sequence

State = Hashable
SERVED = "served"


class QueueError(Exception):
    """Base class for errors raised by this package."""


class IdleService(QueueError):
    """Service requested at the idle state."""


class PositionOutOfRange(QueueError):
    """A position outside ``[1, n(x)]`` was used."""


class CapacityReached(QueueError):
    """Arrival requested at a state where the regime defines none."""


class ContractViolation(QueueError):
    """A regime breaks one of the contract laws.

    ``violations`` holds every problem found; ``law``/``state``/``detail``
    describe the first one.
    """

    def __init__(self, law: str, state: Any = None, detail: str = "", violations=None):
        self.law = law
        self.state = state
        self.detail = detail
        self.violations = list(violations) if violations else [Violation(law, state, detail)]
        super().__init__(f"{law} at {state!r}: {detail}" if state is not None else f"{law}: {detail}")


class ParseError(QueueError):
    """Malformed regime description."""


class NodeCapExceeded(QueueError):
    """An exploration generated more distinct nodes than allowed."""

    def __init__(self, cap: int, what: str = "states"):
        self.cap = cap
        super().__init__(f"more than {cap} {what} generated; raise the node cap or lower the bound")


@dataclass(frozen=True)
class Violation:
    law: str
    state: Any
    detail: str


@dataclass(frozen=True)
class Params:
    """Arrival rate ``lam``, service rate ``mu``, waiting cost rate ``c`` and reward ``r``."""

    lam: float
    mu: float
    c: float
    r: float

    def __post_init__(self):
        for name in ("lam", "mu", "c", "r"):
            value = getattr(self, name)
            if not (value > 0 and value < float("inf")):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")

    @property
    def p(self) -> float:
        """Probability that a round's event is an arrival."""
        return self.lam / (self.lam + self.mu)

    @property
    def q(self) -> float:
        """Probability that a round's event is a service completion."""
        return self.mu / (self.lam + self.mu)

    @property
    def round_cost(self) -> float:
        """Expected waiting cost of one customer over one round."""
        return self.c / (self.lam + self.mu)

    def as_dict(self) -> dict[str, float]:
        return {"lambda": self.lam, "mu": self.mu, "c": self.c, "r": self.r}


class Regime(ABC):
    """Abstract queueing regime.

    Subclasses implement the raw transition maps.  Callers should go through
    the checked module-level functions (:func:`arrive`, :func:`serve`, ...),
    which enforce preconditions.
    """

    name: str = "regime"
    #: Largest count at which arrivals are defined to exceed; ``None`` = unbounded.
    capacity: int | None = None

    @abstractmethod
    def idle(self) -> State: ...

    @abstractmethod
    def count(self, x: State) -> int: ...

    @abstractmethod
    def alpha(self, x: State) -> State: ...

    @abstractmethod
    def xi(self, x: State) -> State: ...

    @abstractmethod
    def rho(self, x: State, i: int) -> State: ...

    @abstractmethod
    def pi(self, x: State) -> int: ...

    def key(self, x: State) -> str:
        return str(x)

    def sort_key(self, x: State) -> tuple:
        return (self.count(x), self.key(x))

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


def arrive(regime: Regime, x: State) -> tuple[State, int]:
    """Apply an arrival; return the new state and the newcomer's position."""
    n = regime.count(x)
    if regime.capacity is not None and n >= regime.capacity:
        raise CapacityReached(f"{regime.name}: no arrival defined at {regime.key(x)}")
    return regime.alpha(x), regime.pi(x)


def serve(regime: Regime, x: State) -> State:
    if regime.count(x) == 0:
        raise IdleService(f"{regime.name}: service at the idle state")
    return regime.xi(x)


def renege_one(regime: Regime, x: State, i: int) -> State:
    n = regime.count(x)
    if not 1 <= i <= n:
        raise PositionOutOfRange(f"position {i} not in [1, {n}] at {regime.key(x)}")
    return regime.rho(x, i)


def renege_set(regime: Regime, x: State, positions: Iterable[int]) -> State:
    """Remove the customers at ``positions`` simultaneously.

    Positions refer to ``x``.  They are removed from the back forward, so no
    index shifting is needed; by the commutation law any other valid order
    gives the same state.
    """
    ordered = sorted(set(positions), reverse=True)
    n = regime.count(x)
    if ordered and (ordered[-1] < 1 or ordered[0] > n):
        raise PositionOutOfRange(f"renege set {sorted(ordered)} not within [1, {n}]")
    for i in ordered:
        x = regime.rho(x, i)
    return x


def track_position(
    i: int,
    event: Literal["arrival", "service"],
    placement: int | None = None,
    others_renege: Sequence[int] = (),
) -> int | Literal["served"]:
    """Position of a tagged customer after an event and a round of reneging.

    ``placement`` is the newcomer's position for an arrival.  ``others_renege``
    are positions in the post-event state and must not contain the tagged
    customer's own post-event position.
    """
    if event == "arrival":
        if placement is None:
            raise ValueError("arrival needs the newcomer's placement")
        i = i + 1 if placement <= i else i
    elif event == "service":
        if i == 1:
            return SERVED
        i -= 1
    else:
        raise ValueError(f"unknown event {event!r}")
    if i in others_renege:
        raise ValueError(f"tagged position {i} listed among the opponents' reneges")
    return i - sum(1 for j in others_renege if j < i)


def contract_violations(
    regime: Regime, states: Iterable[State], *, check_balking: bool = False
) -> list[Violation]:
    """Check the count, placement and commutation laws on ``states``.

    With ``check_balking`` the optional law ``rho(alpha(x), pi(x)) == x`` is
    checked as well.
    """
    found: list[Violation] = []
    key = regime.key
    for x in states:
        n = regime.count(x)
        if n < 0:
            found.append(Violation("count", key(x), f"negative count {n}"))
            continue
        if n == 0 and x != regime.idle():
            found.append(Violation("unique-idle", key(x), "second state with count 0"))
        if regime.capacity is None or n < regime.capacity:
            y = regime.alpha(x)
            pos = regime.pi(x)
            if regime.count(y) != n + 1:
                found.append(Violation("count", key(x), f"arrival leads to count {regime.count(y)}, expected {n + 1}"))
            if not 1 <= pos <= n + 1:
                found.append(Violation("placement-range", key(x), f"placement {pos} outside [1, {n + 1}]"))
            elif check_balking and regime.count(y) == n + 1 and regime.rho(y, pos) != x:
                found.append(Violation("balking", key(x), "reneging at the placement does not restore the state"))
        if n == 0:
            continue
        if regime.count(regime.xi(x)) != n - 1:
            found.append(Violation("count", key(x), "service does not remove exactly one customer"))
        removed = {}
        for i in range(1, n + 1):
            removed[i] = regime.rho(x, i)
            if regime.count(removed[i]) != n - 1:
                found.append(Violation("count", key(x), f"renege at {i} does not remove exactly one customer"))
        if any(v.state == key(x) and v.law == "count" for v in found):
            continue
        for j in range(2, n + 1):
            for i in range(1, j):
                lhs = regime.rho(removed[j], i)
                rhs = regime.rho(removed[i], j - 1)
                if lhs != rhs:
                    found.append(
                        Violation(
                            "commutation",
                            key(x),
                            f"rho_{i}(rho_{j}) = {key(lhs)} but rho_{j - 1}(rho_{i}) = {key(rhs)}",
                        )
                    )
    return found
