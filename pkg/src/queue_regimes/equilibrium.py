"""Equilibrium checks through a tagged customer's stopping problem.

Fix the other customers' Markov strategy.  A tagged customer at state ``x``
and position ``i`` decides, simultaneously with everyone else, whether to
stay.  Staying costs one round of waiting, ``c / (lam + mu)``; then either
a newcomer arrives (probability ``p``) or the customer in service leaves
(probability ``q``), which pays ``r`` if that was the tagged customer.
Reneging ends the problem with payoff 0.

A *tagged node* ``(x, i)`` is such a decision point.  The chain of tagged
nodes is finite whenever the opponents' strategy keeps the queue bounded;
values are computed on it by value iteration (optimal stopping) or by a
linear solve (a fixed stay/leave rule).
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np
from scipy.sparse import csr_matrix, identity
from scipy.sparse.linalg import spsolve

from .analysis import DEFAULT_MAX_N, DEFAULT_NODE_CAP, build_state_graph
from .core import NodeCapExceeded, Params, QueueError, Regime, State, arrive, renege_set, serve, track_position
from .optimum import DEFAULT_CAP, TIE_EPS, Threshold, naor_threshold

VI_TOL = 1e-10
VI_MAX_ITER = 1_000_000

Profile = Callable[[State, int], Iterable[int]]


class ProfileUndefined(QueueError):
    """The opponents' strategy has no action at a visited state."""


class NoConvergence(QueueError):
    def __init__(self, max_iter: int, delta: float):
        self.max_iter = max_iter
        super().__init__(f"value iteration did not converge in {max_iter} sweeps (last change {delta:.3g})")


@dataclass(frozen=True)
class ThresholdProfile:
    """Everyone beyond position ``n_star`` reneges."""

    n_star: int

    def __call__(self, x: State, n: int) -> tuple[int, ...]:
        return tuple(range(self.n_star + 1, n + 1))


class RandomProfile:
    """A fixed but arbitrary deterministic Markov profile.

    Each state's renege set is drawn once from a generator seeded by
    ``(seed, state key)``, so the profile is a pure function of the state.
    Positions beyond ``cap`` always renege, which keeps the queue finite.
    """

    def __init__(self, regime: Regime, seed: int, cap: int, renege_prob: float | None = None):
        self.regime = regime
        self.seed = seed
        self.cap = cap
        self.renege_prob = renege_prob if renege_prob is not None else random.Random(f"{seed}|prob").uniform(0.0, 0.5)
        self._memo: dict[State, tuple[int, ...]] = {}

    def __call__(self, x: State, n: int) -> tuple[int, ...]:
        hit = self._memo.get(x)
        if hit is None:
            rng = random.Random(f"{self.seed}|{self.regime.key(x)}")
            hit = tuple(j for j in range(1, n + 1) if j > self.cap or rng.random() < self.renege_prob)
            self._memo[x] = hit
        return hit


class TableProfile:
    """Explicit renege sets keyed by canonical state key."""

    def __init__(self, regime: Regime, table: dict[str, Iterable[int]]):
        self.regime = regime
        self.table = {k: tuple(v) for k, v in table.items()}

    def __call__(self, x: State, n: int) -> tuple[int, ...]:
        try:
            return self.table[self.regime.key(x)]
        except KeyError:
            raise ProfileUndefined(f"no renege set for state {self.regime.key(x)}") from None


@dataclass
class TaggedChain:
    """Decision points ``(x, i)`` and where staying leads.

    ``arrival[k]`` / ``service[k]`` index the next decision point after the
    round's event; ``service[k] == -1`` means the tagged customer is served.
    """

    regime: Regime
    nodes: list[tuple[State, int]]
    index: dict[tuple[State, int], int] = field(repr=False)
    arrival: np.ndarray = field(repr=False)
    service: np.ndarray = field(repr=False)
    n_starts: int = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def positions(self) -> np.ndarray:
        return np.fromiter((i for _, i in self.nodes), dtype=np.int64, count=len(self.nodes))


def default_starts(regime: Regime, max_n: int, node_cap: int = DEFAULT_NODE_CAP) -> list[tuple[State, int]]:
    """Every reachable non-idle state (count at most ``max_n``) with every position."""
    graph = build_state_graph(regime, max_n, node_cap)
    return [(x, i) for x in graph.nodes for i in range(1, regime.count(x) + 1)]


def build_tagged_chain(
    regime: Regime,
    profile: Profile,
    max_n: int = DEFAULT_MAX_N,
    node_cap: int = DEFAULT_NODE_CAP,
    starts: Iterable[tuple[State, int]] | None = None,
) -> TaggedChain:
    starts = list(starts) if starts is not None else default_starts(regime, max_n, node_cap)
    index: dict[tuple[State, int], int] = {}
    nodes: list[tuple[State, int]] = []

    def visit(node):
        k = index.get(node)
        if k is None:
            k = index[node] = len(nodes)
            nodes.append(node)
            if len(nodes) > node_cap:
                raise NodeCapExceeded(node_cap, "tagged states")
            queue.append(node)
        return k

    queue: deque[tuple[State, int]] = deque()
    for s in starts:
        visit(s)
    n_starts = len(nodes)
    links: dict[int, tuple[int, int]] = {}
    while queue:
        x, i = node = queue.popleft()
        n = regime.count(x)
        others = [j for j in profile(x, n) if j != i]
        x1 = renege_set(regime, x, others)
        i1 = i - sum(1 for j in others if j < i)
        x2, placement = arrive(regime, x1)
        a = visit((x2, track_position(i1, "arrival", placement)))
        s = -1 if i1 == 1 else visit((serve(regime, x1), i1 - 1))
        links[index[node]] = (a, s)
    arr = np.array([links[k][0] for k in range(len(nodes))], dtype=np.int64)
    srv = np.array([links[k][1] for k in range(len(nodes))], dtype=np.int64)
    return TaggedChain(regime, nodes, index, arr, srv, n_starts)


@dataclass
class StoppingValue:
    chain: TaggedChain
    values: np.ndarray  # value at each decision point
    stay: np.ndarray  # value of staying this round (then continuing optimally / per rule)
    sweeps: int = 0

    def value(self, x: State, i: int) -> float:
        return float(self.values[self.chain.index[(x, i)]])

    def stay_value(self, x: State, i: int) -> float:
        return float(self.stay[self.chain.index[(x, i)]])


def _stay_values(chain: TaggedChain, params: Params, v: np.ndarray) -> np.ndarray:
    served = chain.service < 0
    after_service = np.where(served, params.r, v[np.where(served, 0, chain.service)])
    return -params.round_cost + params.p * v[chain.arrival] + params.q * after_service


def _evaluate_rule(chain: TaggedChain, params: Params, stay: np.ndarray) -> np.ndarray:
    """Value of the rule that stays exactly on the nodes flagged in ``stay``."""
    m = len(chain)
    served = chain.service < 0
    rows = np.nonzero(stay)[0]
    data, ri, ci = [], [], []
    ri.append(rows)
    ci.append(chain.arrival[rows])
    data.append(np.full(rows.size, params.p))
    keep = rows[~served[rows]]
    ri.append(keep)
    ci.append(chain.service[keep])
    data.append(np.full(keep.size, params.q))
    trans = csr_matrix((np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))), shape=(m, m))
    rhs = np.zeros(m)
    rhs[rows] = -params.round_cost + params.q * params.r * served[rows]
    mat = (identity(m, format="csr") - trans).tocsc()
    return np.asarray(spsolve(mat, rhs)).reshape(m)


def optimal_stopping_value(
    chain: TaggedChain, params: Params, tol: float = VI_TOL, max_iter: int = VI_MAX_ITER, polish: bool = True
) -> StoppingValue:
    """Least fixpoint of ``V = max(0, stay value)`` by value iteration from 0.

    Iterates are nondecreasing.  With ``polish`` the greedy stopping rule of
    the last iterate is evaluated exactly and kept if it satisfies the
    Bellman equation to within ``tol``; this removes the tail error of the
    geometric convergence.
    """
    v = np.zeros(len(chain))
    delta = float("inf")
    sweeps = 0
    while sweeps < max_iter:
        sweeps += 1
        nv = np.maximum(_stay_values(chain, params, v), 0.0)
        delta = float(np.max(np.abs(nv - v))) if v.size else 0.0
        v = nv
        if delta <= tol:
            break
    else:
        raise NoConvergence(max_iter, delta)
    if polish and v.size:
        rule = _stay_values(chain, params, v) > 0.0
        exact = np.maximum(_evaluate_rule(chain, params, rule), 0.0)
        residual = np.max(np.abs(np.maximum(_stay_values(chain, params, exact), 0.0) - exact))
        if residual <= tol and np.all(exact >= v - 10 * tol):
            v = exact
    return StoppingValue(chain, v, _stay_values(chain, params, v), sweeps)


def policy_value(
    regime: Regime,
    params: Params,
    opponent_profile: Profile,
    stay_threshold: int,
    max_n: int = DEFAULT_MAX_N,
    node_cap: int = DEFAULT_NODE_CAP,
    starts: Iterable[tuple[State, int]] | None = None,
    chain: TaggedChain | None = None,
) -> StoppingValue:
    """Value of "stay while my position is at most ``stay_threshold``"."""
    chain = chain if chain is not None else build_tagged_chain(regime, opponent_profile, max_n, node_cap, starts)
    rule = chain.positions() <= stay_threshold
    v = _evaluate_rule(chain, params, rule)
    return StoppingValue(chain, v, _stay_values(chain, params, v))


class EqVerdict(str, Enum):
    MPE = "MPE"
    DEVIATION_FOUND = "DeviationFound"


@dataclass(frozen=True)
class Deviation:
    state: State
    position: int
    prescribed: str
    alternative: str
    stay_value: float
    gap: float


@dataclass
class EquilibriumReport:
    regime: str
    params: Params
    threshold: Threshold
    verdict: EqVerdict
    deviations: list[Deviation]
    checked: int
    sweeps: int

    @property
    def knife_edge(self) -> bool:
        return self.threshold.knife_edge

    def find(self, state: State, position: int) -> Deviation | None:
        for d in self.deviations:
            if d.state == state and d.position == position:
                return d
        return None

    def to_dict(self, regime: Regime) -> dict:
        return {
            "schema": "queue-regimes/verify-mpe/v1",
            "regime": self.regime,
            "params": self.params.as_dict(),
            "n_star": self.threshold.n_star,
            "knife_edge": self.knife_edge,
            "verdict": self.verdict.value,
            "checked_states": self.checked,
            "deviations": [
                {
                    "state": regime.key(d.state),
                    "count": regime.count(d.state),
                    "position": d.position,
                    "prescribed": d.prescribed,
                    "alternative": d.alternative,
                    "stay_value": d.stay_value,
                    "gap": d.gap,
                }
                for d in self.deviations
            ],
        }


@lru_cache(maxsize=64)
def _cached_chain(regime: Regime, n_star: int, max_n: int, node_cap: int) -> TaggedChain:
    return build_tagged_chain(regime, ThresholdProfile(n_star), max_n, node_cap)


def verify_mpe(
    regime: Regime,
    params: Params,
    max_n: int = DEFAULT_MAX_N,
    node_cap: int = DEFAULT_NODE_CAP,
    n_cap: int = DEFAULT_CAP,
    eps: float = TIE_EPS,
    tol: float = VI_TOL,
) -> EquilibriumReport:
    """Check that "keep the first n* customers" is a Markov perfect equilibrium.

    Every decision point reachable from the bounded state graph is checked:
    customers within the first ``n*`` positions must weakly prefer staying,
    customers beyond must weakly prefer leaving.
    """
    threshold = naor_threshold(params, n_cap)
    n_star = threshold.n_star
    chain = _cached_chain(regime, n_star, max_n, node_cap)
    sv = optimal_stopping_value(chain, params, tol=tol)
    deviations = []
    for k, (x, i) in enumerate(chain.nodes):
        q_stay = float(sv.stay[k])
        if i <= n_star and q_stay < -eps:
            deviations.append(Deviation(x, i, "stay", "renege", q_stay, -q_stay))
        elif i > n_star and q_stay > eps:
            deviations.append(Deviation(x, i, "renege", "stay", q_stay, q_stay))
    verdict = EqVerdict.DEVIATION_FOUND if deviations else EqVerdict.MPE
    return EquilibriumReport(regime.name, params, threshold, verdict, deviations, len(chain), sv.sweeps)
