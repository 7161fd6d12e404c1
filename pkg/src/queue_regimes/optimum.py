"""Socially optimal admission threshold.

Work happens on the embedded round chain of a queue capped at ``n``: each
round is an arrival with probability ``p`` or a service with probability
``q``.  Started at the cap, ``theta_n`` is the probability of emptying
before returning to the cap and ``T_n`` the expected number of rounds until
either happens.  Raising the cap from ``n - 1`` to ``n`` changes welfare
per excursion by

    D_n = r * theta_n - c / (lam + mu) * T_n,

which is strictly decreasing in ``n``; the optimal cap is the last ``n``
with ``D_n >= 0``.  ``threshold_welfare`` is an independent check based on
the stationary distribution of the capped birth-death chain.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO

import numpy as np

from .core import Params, QueueError

TIE_EPS = 1e-9
DEFAULT_CAP = 64


class CapTooSmall(QueueError):
    def __init__(self, cap: int, d_cap: float):
        self.cap = cap
        self.d_cap = d_cap
        super().__init__(f"D_{cap} = {d_cap:.6g} >= 0: the optimal threshold exceeds the cap {cap}")


@dataclass(frozen=True)
class RuinQuantities:
    theta: float
    t_rounds: float


def _eliminate(p: float, q: float, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Forward elimination of the interior first-step equations on 1..n-1.

    Interior rows read ``h(i) = p h(i+1) + q h(i-1)`` (``h(0) = 1``) and
    ``t(i) = 1 + p t(i+1) + q t(i-1)`` (``t(0) = 0``).  After eliminating
    ``i - 1`` each row becomes ``v(i) = a_i v(i+1) + b_i``.  The pivot
    ``1 - q a_{i-1}`` is carried as ``p + q (1 - a_{i-1})`` so every step
    only adds and divides positive numbers; tiny ruin probabilities keep
    full relative accuracy.
    """
    a = np.zeros(n)
    one_minus_a = np.ones(n)
    hb = np.zeros(n)
    tb = np.zeros(n)
    # index 0 encodes the boundary: v(0) = 0 * v(1) + boundary value
    hb[0], tb[0] = 1.0, 0.0
    for i in range(1, n):
        pivot = p + q * one_minus_a[i - 1]
        a[i] = p / pivot
        one_minus_a[i] = q * one_minus_a[i - 1] / pivot
        hb[i] = q * hb[i - 1] / pivot
        tb[i] = (1.0 + q * tb[i - 1]) / pivot
    return a, one_minus_a, hb, tb


def ruin_quantities(params: Params, n: int) -> RuinQuantities:
    if n < 1:
        raise ValueError("n must be at least 1")
    p, q = params.p, params.q
    _, _, hb, tb = _eliminate(p, q, n)
    # the far boundary v(n) = 0, so v(n-1) = b_{n-1}; from the cap an arrival absorbs at n at once
    return RuinQuantities(theta=float(q * hb[n - 1]), t_rounds=float(1.0 + q * tb[n - 1]))


def absorption_profile(params: Params, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Full solution vectors ``h(0..n)`` and ``t(0..n)`` of the first-step systems."""
    if n < 1:
        raise ValueError("n must be at least 1")
    a, _, hb, tb = _eliminate(params.p, params.q, n)
    h = np.zeros(n + 1)
    t = np.zeros(n + 1)
    h[0] = 1.0
    for i in range(n - 1, 0, -1):
        h[i] = a[i] * h[i + 1] + hb[i]
        t[i] = a[i] * t[i + 1] + tb[i]
    return h, t


def surplus(params: Params, n: int) -> float:
    rq = ruin_quantities(params, n)
    return params.r * rq.theta - params.round_cost * rq.t_rounds


def surplus_curve(params: Params, n_max: int) -> np.ndarray:
    """``D_1 .. D_{n_max}`` (index 0 holds ``D_1``)."""
    return np.array([surplus(params, n) for n in range(1, n_max + 1)])


@dataclass(frozen=True)
class Threshold:
    n_star: int
    tie: bool
    d_at: float  # D_{n*}, or D_1 when n* = 0
    d_next: float  # D_{n*+1}

    @property
    def knife_edge(self) -> bool:
        return abs(self.d_at) <= TIE_EPS or abs(self.d_next) <= TIE_EPS


def naor_threshold(params: Params, n_cap: int = DEFAULT_CAP, eps: float = TIE_EPS) -> Threshold:
    if n_cap < 1:
        raise ValueError("n_cap must be at least 1")
    curve = surplus_curve(params, n_cap)
    if curve[-1] >= -eps:
        raise CapTooSmall(n_cap, float(curve[-1]))
    admitted = np.nonzero(curve >= -eps)[0]
    n_star = int(admitted[-1]) + 1 if admitted.size else 0
    d_at = float(curve[n_star - 1]) if n_star else float(curve[0])
    d_next = float(curve[n_star])
    tie = abs(curve[n_star - 1]) <= eps if n_star else abs(curve[0]) <= eps
    return Threshold(n_star, bool(tie), d_at, d_next)


def individual_threshold(params: Params) -> int:
    """Largest position at which a lone FCFS joiner still expects a gain."""
    return math.floor(params.r * params.mu / params.c)


def stationary_distribution(params: Params, n: int) -> np.ndarray:
    """Stationary law of the birth-death chain capped at ``n``."""
    log_rho = math.log(params.lam / params.mu)
    k = np.arange(n + 1)
    w = k * log_rho
    w = np.exp(w - w.max())
    return w / w.sum()


def threshold_welfare(params: Params, n: int) -> float:
    """Long-run welfare per unit time when at most ``n`` customers are admitted."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return 0.0
    pi = stationary_distribution(params, n)
    return float(params.r * params.mu * (1.0 - pi[0]) - params.c * np.dot(np.arange(n + 1), pi))


def curve_rows(params: Params, n_max: int) -> list[dict[str, float]]:
    rows = []
    for n in range(1, n_max + 1):
        rq = ruin_quantities(params, n)
        rows.append({
            "n": n,
            "theta": rq.theta,
            "T": rq.t_rounds,
            "D": params.r * rq.theta - params.round_cost * rq.t_rounds,
            "W": threshold_welfare(params, n),
        })
    return rows


def write_curve_csv(params: Params, n_max: int, out: IO[str]) -> None:
    writer = csv.DictWriter(out, fieldnames=["n", "theta", "T", "D", "W"])
    writer.writeheader()
    for row in curve_rows(params, n_max):
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
