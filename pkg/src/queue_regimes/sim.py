"""Monte Carlo simulation of the embedded round chain.

Each round: the current state is held for one round (expected length
``1 / (lam + mu)`` or an exponential draw), then an arrival happens with
probability ``p``, otherwise a service (a no-op when idle), then the
customers named by the profile renege together.

Under a profile that keeps the queue bounded the controlled process lives
on finitely many states.  ``compile_chain`` enumerates them once so the
per-round loop runs over integer tables in a numba kernel.

Randomness: one Philox stream per ``(seed, replication)`` built from
``numpy.random.SeedSequence([seed, replication])``, so replications are
independent and results do not depend on execution order.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Literal

import numpy as np
from numba import njit

from .analysis import DEFAULT_NODE_CAP
from .core import NodeCapExceeded, Params, Regime, State, arrive, renege_set, serve
from .equilibrium import Profile

CHUNK = 1 << 20


def _stream(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replication])))


@dataclass
class CompiledChain:
    """Post-renege states reachable from idle and their successor tables."""

    states: list[State]
    counts: np.ndarray
    arr_next: np.ndarray
    arr_reneged: np.ndarray
    srv_next: np.ndarray
    srv_reneged: np.ndarray


def compile_chain(regime: Regime, profile: Profile, node_cap: int = DEFAULT_NODE_CAP) -> CompiledChain:
    idle = regime.idle()
    index = {idle: 0}
    states = [idle]
    queue = deque([idle])
    rows: dict[int, tuple[int, int, int, int]] = {}

    def settle(y):
        n = regime.count(y)
        out = tuple(profile(y, n)) if n > 0 else ()
        z = renege_set(regime, y, out)
        k = index.get(z)
        if k is None:
            k = index[z] = len(states)
            states.append(z)
            if len(states) > node_cap:
                raise NodeCapExceeded(node_cap)
            queue.append(z)
        return k, len(out)

    while queue:
        x = queue.popleft()
        a, a_out = settle(arrive(regime, x)[0])
        if regime.count(x) > 0:
            s, s_out = settle(serve(regime, x))
        else:
            s, s_out = index[x], 0
        rows[index[x]] = (a, a_out, s, s_out)
    m = len(states)
    table = np.array([rows[k] for k in range(m)], dtype=np.int64).reshape(m, 4)
    counts = np.array([regime.count(x) for x in states], dtype=np.int64)
    return CompiledChain(states, counts, table[:, 0].copy(), table[:, 1].copy(), table[:, 2].copy(), table[:, 3].copy())


@njit(cache=True)
def _chain_kernel(x, u, dur, dt_const, p, counts, arr_next, arr_ren, srv_next, srv_ren, hist, acc):
    # acc: [served, reneged, area, time]
    served = 0
    reneged = 0
    area = 0.0
    time = 0.0
    sampled = dur.shape[0] > 0
    for k in range(u.shape[0]):
        dt = dur[k] if sampled else dt_const
        n = counts[x]
        area += n * dt
        time += dt
        hist[n] += dt
        if u[k] < p:
            reneged += arr_ren[x]
            x = arr_next[x]
        elif n > 0:
            served += 1
            reneged += srv_ren[x]
            x = srv_next[x]
    acc[0] += served
    acc[1] += reneged
    acc[2] += area
    acc[3] += time
    return x


@dataclass
class SimConfig:
    params: Params
    regime: Regime
    profile: Profile
    rounds: int
    seed: int = 0
    replications: int = 1
    duration: Literal["expected", "sampled"] = "expected"
    node_cap: int = DEFAULT_NODE_CAP

    def __post_init__(self):
        if self.rounds < 1 or self.replications < 1:
            raise ValueError("rounds and replications must be positive")
        if self.duration not in ("expected", "sampled"):
            raise ValueError(f"unknown duration mode {self.duration!r}")


@dataclass
class SimStats:
    welfare_rate: float
    welfare_se: float
    served: int
    reneged: int
    histogram: np.ndarray  # time-average law of the customer count
    rep_welfare: np.ndarray
    rep_served: np.ndarray
    rep_reneged: np.ndarray
    rep_time: np.ndarray
    seed: int
    rounds: int
    duration: str

    def to_dict(self) -> dict:
        return {
            "schema": "queue-regimes/simulate/v1",
            "seed": self.seed,
            "rounds": self.rounds,
            "replications": int(self.rep_welfare.size),
            "duration": self.duration,
            "welfare_rate": self.welfare_rate,
            "welfare_se": self.welfare_se,
            "served": self.served,
            "reneged": self.reneged,
            "histogram": self.histogram.tolist(),
        }

    def write_csv(self, out: IO[str]) -> None:
        writer = csv.writer(out)
        writer.writerow(["replication", "welfare_rate", "served", "reneged", "time"])
        for k in range(self.rep_welfare.size):
            writer.writerow([k, repr(float(self.rep_welfare[k])), int(self.rep_served[k]),
                             int(self.rep_reneged[k]), repr(float(self.rep_time[k]))])


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = math.fsum(values) / values.size
    if values.size < 2:
        return mean, float("nan")
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def run_sim(config: SimConfig, chain: CompiledChain | None = None) -> SimStats:
    params = config.params
    chain = chain if chain is not None else compile_chain(config.regime, config.profile, config.node_cap)
    nbins = int(chain.counts.max()) + 1
    rate = params.lam + params.mu
    reps = config.replications
    welfare = np.zeros(reps)
    served = np.zeros(reps, dtype=np.int64)
    reneged = np.zeros(reps, dtype=np.int64)
    times = np.zeros(reps)
    hist_total = np.zeros(nbins)
    no_durations = np.zeros(0)
    for rep in range(reps):
        rng = _stream(config.seed, rep)
        hist = np.zeros(nbins)
        acc = np.zeros(4)
        x = 0
        left = config.rounds
        while left > 0:
            size = min(left, CHUNK)
            u = rng.random(size)
            dur = rng.standard_exponential(size) / rate if config.duration == "sampled" else no_durations
            x = _chain_kernel(x, u, dur, 1.0 / rate, params.p, chain.counts, chain.arr_next,
                              chain.arr_reneged, chain.srv_next, chain.srv_reneged, hist, acc)
            left -= size
        served[rep], reneged[rep], times[rep] = int(acc[0]), int(acc[1]), acc[3]
        welfare[rep] = (params.r * acc[0] - params.c * acc[2]) / acc[3]
        hist_total += hist
    mean, se = _mean_se(welfare)
    return SimStats(
        welfare_rate=mean,
        welfare_se=se,
        served=int(served.sum()),
        reneged=int(reneged.sum()),
        histogram=hist_total / math.fsum(hist_total),
        rep_welfare=welfare,
        rep_served=served,
        rep_reneged=reneged,
        rep_time=times,
        seed=config.seed,
        rounds=config.rounds,
        duration=config.duration,
    )


@njit(cache=True)
def _coupled_kernel(state, u, p, n, cost, r, trace, acc):
    # state: [count under cap n, count under cap n - 1]; acc: [payoff difference, difference at last block start, blocks]
    y = state[0]
    z = state[1]
    diff = acc[0]
    at_block = acc[1]
    blocks = acc[2]
    record = trace.shape[0] > 0
    for k in range(u.shape[0]):
        if y == n:
            at_block = diff
            blocks += 1
        if record:
            trace[k, 0] = y
            trace[k, 1] = z
        diff -= cost * (y - z)
        if u[k] < p:
            y = min(y + 1, n)
            z = min(z + 1, n - 1)
        else:
            if y > 0:
                y -= 1
                diff += r
            if z > 0:
                z -= 1
                diff -= r
    state[0] = y
    state[1] = z
    acc[0] = diff
    acc[1] = at_block
    acc[2] = blocks


@dataclass
class CoupledEstimate:
    estimate: float
    se: float
    blocks: int
    rep_estimates: np.ndarray = field(repr=False)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "schema": "queue-regimes/estimate-dn/v1",
            "seed": self.seed,
            "estimate": self.estimate,
            "se": self.se,
            "blocks": self.blocks,
            "replications": int(self.rep_estimates.size),
        }


def _coupled_run(params: Params, n: int, rounds: int, rng: np.random.Generator, trace: np.ndarray):
    state = np.array([n, n - 1], dtype=np.int64)
    acc = np.zeros(3)
    left, offset = rounds, 0
    while left > 0:
        size = min(left, CHUNK)
        sub = trace[offset:offset + size] if trace.shape[0] else trace
        _coupled_kernel(state, rng.random(size), params.p, n, params.round_cost, params.r, sub, acc)
        left -= size
        offset += size
    return acc


def coupled_dn_estimate(params: Params, n: int, rounds: int, replications: int = 20, seed: int = 0) -> CoupledEstimate:
    """Estimate ``D_n`` by running caps ``n`` and ``n - 1`` on one event stream.

    The difference of the two welfare totals is accumulated up to the last
    round at which the larger system is back at ``n`` and divided by the
    number of completed excursions from ``n``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if rounds < 1 or replications < 1:
        raise ValueError("rounds and replications must be positive")
    estimates = np.zeros(replications)
    total_blocks = 0
    empty = np.zeros((0, 2), dtype=np.int64)
    for rep in range(replications):
        acc = _coupled_run(params, n, rounds, _stream(seed, rep), empty)
        completed = int(acc[2]) - 1
        if completed < 1:
            raise ValueError("no completed excursion; increase rounds")
        estimates[rep] = acc[1] / completed
        total_blocks += completed
    mean, se = _mean_se(estimates)
    return CoupledEstimate(mean, se, total_blocks, estimates, seed)


def coupled_trajectory(params: Params, n: int, rounds: int, seed: int = 0, replication: int = 0) -> np.ndarray:
    """Per-round ``(cap n, cap n - 1)`` counts of one coupled run, for inspection."""
    trace = np.zeros((rounds, 2), dtype=np.int64)
    _coupled_run(params, n, rounds, _stream(seed, replication), trace)
    return trace
