"""Queueing regimes for strategic customers in an observable M/M/1 queue."""

from .analysis import build_state_graph, check_universal_optimality, is_maximal
from .core import Params, arrive, renege_one, renege_set, serve, track_position
from .equilibrium import policy_value, verify_mpe
from .optimum import naor_threshold, ruin_quantities, surplus, threshold_welfare
from .regimes import fcfs, get_regime, lcfs_np, lcfs_pr, priority_slots, score_regime
from .sim import SimConfig, coupled_dn_estimate, run_sim

__all__ = [
    "Params", "arrive", "serve", "renege_one", "renege_set", "track_position",
    "fcfs", "lcfs_pr", "lcfs_np", "priority_slots", "score_regime", "get_regime",
    "build_state_graph", "is_maximal", "check_universal_optimality",
    "ruin_quantities", "surplus", "naor_threshold", "threshold_welfare",
    "verify_mpe", "policy_value",
    "SimConfig", "run_sim", "coupled_dn_estimate",
]
