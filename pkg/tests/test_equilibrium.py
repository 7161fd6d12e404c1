import numpy as np
import pytest

from queue_regimes.core import Params
from queue_regimes.equilibrium import (
    EqVerdict,
    NoConvergence,
    ProfileUndefined,
    RandomProfile,
    TableProfile,
    ThresholdProfile,
    build_tagged_chain,
    optimal_stopping_value,
    policy_value,
    verify_mpe,
)
from queue_regimes.regimes import BUILTIN, fcfs, lcfs_np, lcfs_pr, priority_slots, score_regime

PARAMS = Params(1, 2, 1, 2)


def test_fcfs_counterexample_value():
    chain = build_tagged_chain(fcfs(), ThresholdProfile(2), max_n=3)
    sv = optimal_stopping_value(chain, PARAMS)
    assert sv.stay_value(3, 3) == pytest.approx(0.5, abs=1e-12)
    # position 1 under FCFS is never displaced: stay until served
    assert sv.value(3, 1) == pytest.approx(PARAMS.r - PARAMS.c / PARAMS.mu, abs=1e-12)


def test_lcfs_pr_arrival_pushes_the_served_customer_back():
    chain = build_tagged_chain(lcfs_pr(), ThresholdProfile(3), max_n=2)
    k = chain.index[(1, 1)]
    assert chain.nodes[chain.arrival[k]] == (2, 2)
    assert chain.service[k] == -1


def test_opponents_renege_at_the_start_of_the_next_round():
    # decision points sit after the event: the newcomer at position 3 is still present
    chain = build_tagged_chain(fcfs(), ThresholdProfile(2), max_n=3)
    k = chain.index[(2, 1)]
    assert chain.nodes[chain.arrival[k]] == (3, 1)
    k = chain.index[(3, 1)]
    assert chain.nodes[chain.arrival[k]] == (3, 1)
    assert chain.service[k] == -1
    # the tagged customer is exempt from the opponents' renege set
    k = chain.index[(3, 3)]
    assert chain.nodes[chain.arrival[k]] == (4, 3)
    assert chain.nodes[chain.service[k]] == (2, 2)


def test_expensive_waiting_is_worthless(regime):
    chain = build_tagged_chain(regime, ThresholdProfile(2), max_n=3)
    sv = optimal_stopping_value(chain, Params(1, 1, 100, 1))
    assert np.all(sv.values == 0)


def test_values_are_bounded(regime):
    chain = build_tagged_chain(regime, RandomProfile(regime, 3, cap=4), max_n=4)
    sv = optimal_stopping_value(chain, PARAMS)
    assert np.all(sv.values >= 0) and np.all(sv.values <= PARAMS.r + 1e-12)


def test_optimal_value_dominates_threshold_rules(regime):
    chain = build_tagged_chain(regime, RandomProfile(regime, 11, cap=4), max_n=4)
    best = optimal_stopping_value(chain, PARAMS).values
    for k in range(0, 6):
        pv = policy_value(regime, PARAMS, None, k, chain=chain)
        assert np.all(best >= np.maximum(pv.values, 0) - 1e-9)


def test_polish_agrees_with_plain_iteration():
    chain = build_tagged_chain(priority_slots(), RandomProfile(priority_slots(), 5, cap=4), max_n=4)
    a = optimal_stopping_value(chain, PARAMS, polish=True).values
    b = optimal_stopping_value(chain, PARAMS, tol=1e-13, polish=False).values
    assert np.max(np.abs(a - b)) < 1e-10


def test_iteration_cap():
    chain = build_tagged_chain(fcfs(), ThresholdProfile(2), max_n=3)
    with pytest.raises(NoConvergence):
        optimal_stopping_value(chain, PARAMS, max_iter=2)


@pytest.mark.parametrize("i", [1, 2, 3, 4])
def test_fcfs_policy_value_closed_form(i):
    # nobody behind can overtake in FCFS, so staying costs c/mu per customer ahead and self
    pv = policy_value(fcfs(), PARAMS, ThresholdProfile(10), stay_threshold=10, max_n=5)
    assert pv.value(5, i) == pytest.approx(PARAMS.r - PARAMS.c * i / PARAMS.mu, abs=1e-12)


def test_policy_value_leaving_is_zero():
    pv = policy_value(lcfs_pr(), PARAMS, ThresholdProfile(3), stay_threshold=0, max_n=3)
    assert np.all(pv.values == 0)


def test_table_profile_missing_state():
    profile = TableProfile(fcfs(), {"1": [], "2": []})
    assert profile(2, 2) == ()
    with pytest.raises(ProfileUndefined):
        build_tagged_chain(fcfs(), profile, max_n=3)


def test_random_profile_is_a_function_of_state():
    regime = score_regime()
    a, b = RandomProfile(regime, 7, cap=3), RandomProfile(regime, 7, cap=3)
    x = (0, 1, 1, 3, 4)
    assert a(x, 5) == b(x, 5) == a(x, 5)
    assert {4, 5} <= set(a(x, 5))


def test_verify_mpe_fcfs_counterexample():
    report = verify_mpe(fcfs(), PARAMS, max_n=8)
    assert report.verdict is EqVerdict.DEVIATION_FOUND
    dev = report.find(3, 3)
    assert dev is not None and dev.prescribed == "renege"
    assert dev.stay_value == pytest.approx(0.5, abs=1e-9)
    doc = report.to_dict(fcfs())
    assert doc["schema"] == "queue-regimes/verify-mpe/v1" and doc["n_star"] == 2


@pytest.mark.parametrize("make", [lcfs_pr, priority_slots, score_regime])
def test_universal_regimes_are_equilibria(make):
    report = verify_mpe(make(), PARAMS, max_n=6)
    assert report.verdict is EqVerdict.MPE and not report.deviations


def test_lcfs_np_fails_when_the_threshold_is_one():
    # r just below the value where D_2 = 0 gives n* = 1; position 2 would still gain by staying
    params = Params(1, 1, 1, 2.8)
    report = verify_mpe(lcfs_np(), params, max_n=6)
    assert report.threshold.n_star == 1 and not report.knife_edge
    assert report.verdict is EqVerdict.DEVIATION_FOUND
    assert report.find(2, 2).stay_value == pytest.approx(0.8, abs=1e-9)


def test_zero_threshold_is_trivially_an_equilibrium(regime):
    report = verify_mpe(regime, Params(1, 2, 10, 1), max_n=4)
    assert report.threshold.n_star == 0
    assert report.verdict is EqVerdict.MPE


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_verify_mpe_is_deterministic(name):
    regime = BUILTIN[name]()
    a = verify_mpe(regime, Params(1.5, 1, 1, 4), max_n=5).to_dict(regime)
    b = verify_mpe(regime, Params(1.5, 1, 1, 4), max_n=5).to_dict(regime)
    assert a == b


def test_universal_regimes_on_random_rates():
    rng = np.random.default_rng(17)
    checked = 0
    while checked < 15:
        params = Params(rng.uniform(0.3, 3), rng.uniform(0.3, 3), rng.uniform(0.2, 2), rng.uniform(0.5, 8))
        th = verify_mpe(fcfs(), params, max_n=3).threshold
        if th.knife_edge or th.n_star > 5:
            continue
        checked += 1
        for make in (lcfs_pr, priority_slots, score_regime):
            assert verify_mpe(make(), params, max_n=6).verdict is EqVerdict.MPE, (make, params)
