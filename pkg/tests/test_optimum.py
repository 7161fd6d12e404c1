import io
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from queue_regimes.core import Params
from queue_regimes.optimum import (
    CapTooSmall,
    absorption_profile,
    curve_rows,
    individual_threshold,
    naor_threshold,
    ruin_quantities,
    surplus,
    surplus_curve,
    threshold_welfare,
    write_curve_csv,
)


def _first_step_exact(p, q, n):
    """Gauss-Jordan on the first-step systems over Fractions; returns h(n-1), t(n-1)."""
    size = n - 1
    if size == 0:
        return Fraction(1), Fraction(0)
    rows = []
    for i in range(1, n):
        row = [Fraction(0)] * (size + 2)
        row[i - 1] = Fraction(1)
        if i + 1 <= n - 1:
            row[i] = -p
        if i - 1 >= 1:
            row[i - 2] = -q
        row[size] = q if i == 1 else Fraction(0)  # h(0) = 1
        row[size + 1] = Fraction(1)  # t(0) = 0
        rows.append(row)
    for col in range(size):
        piv = rows[col][col]
        rows[col] = [v / piv for v in rows[col]]
        for r in range(size):
            if r != col and rows[r][col]:
                f = rows[r][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[col])]
    return rows[-1][size], rows[-1][size + 1]


def _exact_d(lam, mu, c, r, n):
    p, q = Fraction(lam, lam + mu), Fraction(mu, lam + mu)
    h, t = _first_step_exact(p, q, n)
    theta, big_t = q * h, 1 + q * t
    return theta, big_t, r * theta - Fraction(c, lam + mu) * big_t


def _exact_w(lam, mu, c, r, n):
    weights = [Fraction(lam, mu) ** k for k in range(n + 1)]
    z = sum(weights)
    pi = [w / z for w in weights]
    return r * mu * (1 - pi[0]) - c * sum(k * w for k, w in enumerate(pi))


PARAMS = Params(1, 2, 1, 2)


def test_hand_example_against_fractions():
    assert _exact_d(1, 2, 1, 2, 1)[2] == 1
    assert _exact_d(1, 2, 1, 2, 2)[2] == Fraction(1, 3)
    theta, big_t, d = _exact_d(1, 2, 1, 2, 3)
    assert (theta, big_t, d) == (Fraction(8, 21), Fraction(17, 7), Fraction(-1, 21))
    rq = ruin_quantities(PARAMS, 3)
    assert rq.theta == pytest.approx(8 / 21, rel=1e-14)
    assert rq.t_rounds == pytest.approx(17 / 7, rel=1e-14)
    assert [_exact_w(1, 2, 1, 2, n) for n in (1, 2, 3)] == [1, Fraction(8, 7), Fraction(17, 15)]


@pytest.mark.parametrize("lam,mu,c,r", [(1, 2, 1, 2), (3, 1, 2, 9), (1, 1, 1, 5), (2, 7, 3, 4)])
def test_surplus_matches_fraction_oracle(lam, mu, c, r):
    params = Params(lam, mu, c, r)
    for n in range(1, 13):
        theta, big_t, d = _exact_d(lam, mu, c, r, n)
        rq = ruin_quantities(params, n)
        assert rq.theta == pytest.approx(float(theta), rel=1e-12)
        assert rq.t_rounds == pytest.approx(float(big_t), rel=1e-12)
        assert surplus(params, n) == pytest.approx(float(d), rel=1e-10, abs=1e-13)


@pytest.mark.parametrize("n", [1, 2, 5, 17, 40])
def test_equal_rates(n):
    rq = ruin_quantities(Params(3, 3, 1, 1), n)
    assert rq.theta == pytest.approx(1 / (2 * n), rel=1e-13)
    assert rq.t_rounds == pytest.approx((n + 1) / 2, rel=1e-13)


def _closed_form(p, q, n):
    """Textbook gambler's ruin from n - 1 on {0..n}, in high precision."""
    with mpmath.workdps(50):
        p, q = mpmath.mpf(p), mpmath.mpf(q)
        if p == q:
            h, dur = 1 - mpmath.mpf(n - 1) / n, mpmath.mpf(n - 1)
        else:
            s = q / p
            up = (1 - s ** (n - 1)) / (1 - s ** n)
            h = 1 - up
            dur = (n - 1) / (q - p) - n / (q - p) * up
        return q * h, 1 + q * dur


@pytest.mark.parametrize("ratio", [0.05, 0.5, 0.9, 1.0, 1.1, 3.0, 20.0])
def test_closed_form_agreement(ratio):
    params = Params(ratio, 1.0, 1, 1)
    for n in range(1, 31):
        theta, big_t = _closed_form(params.p, params.q, n)
        rq = ruin_quantities(params, n)
        assert abs(rq.theta / float(theta) - 1) <= 1e-10
        assert abs(rq.t_rounds / float(big_t) - 1) <= 1e-10


def test_absorption_profile_solves_first_step_equations():
    params = Params(1.3, 0.7, 1, 1)
    h, t = absorption_profile(params, 9)
    p, q = params.p, params.q
    assert h[0] == 1 and h[-1] == 0 and t[0] == 0 and t[-1] == 0
    for i in range(1, 9):
        assert h[i] == pytest.approx(p * h[i + 1] + q * h[i - 1], rel=1e-13)
        assert t[i] == pytest.approx(1 + p * t[i + 1] + q * t[i - 1], rel=1e-13)


def test_tiny_ruin_probability_keeps_relative_accuracy():
    params = Params(50.0, 1.0, 1, 1)
    rq = ruin_quantities(params, 25)
    theta, _ = _closed_form(params.p, params.q, 25)
    assert 0 < rq.theta < 1e-40
    assert abs(rq.theta / float(theta) - 1) <= 1e-10


_rates = st.floats(0.05, 20.0)


@settings(max_examples=60, deadline=None)
@given(_rates, _rates, _rates, _rates)
def test_surplus_strictly_decreasing(lam, mu, c, r):
    d = surplus_curve(Params(lam, mu, c, r), 25)
    step = np.diff(d)
    # with upward drift D_n converges geometrically and later steps drop below rounding
    noise = 1e-14 * np.max(np.abs(d))
    assert np.all((step < 0) | (np.abs(step) <= noise))
    assert step[0] < 0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.1, 3.0), st.floats(0.1, 10.0))
def test_threshold_maximises_welfare(lam, mu, c, r):
    params = Params(lam, mu, c, r)
    assume(r * mu / c < 15)
    th = naor_threshold(params)
    assume(not th.knife_edge)
    w = [threshold_welfare(params, n) for n in range(0, 25)]
    # with light traffic W(n) - W(n-1) decays like (lam/mu)^n and drops below rounding
    assert w[th.n_star] >= max(w) - 1e-12 * max(1.0, abs(max(w)))
    for n in range(1, 25):
        d = surplus(params, n)
        if abs(d) > 1e-9 and abs(w[n] - w[n - 1]) > 1e-12:
            assert np.sign(w[n] - w[n - 1]) == np.sign(d)


def test_threshold_examples():
    th = naor_threshold(PARAMS)
    assert th.n_star == 2 and not th.tie
    assert th.d_at == pytest.approx(1 / 3) and th.d_next == pytest.approx(-1 / 21)
    assert individual_threshold(PARAMS) == 4
    assert naor_threshold(Params(1, 2, 10, 1)).n_star == 0


def test_threshold_never_exceeds_individual_threshold():
    for r in (0.5, 1, 3, 7, 12):
        params = Params(1.5, 1, 1, r)
        assert naor_threshold(params).n_star <= individual_threshold(params)


def test_tie_is_admitted():
    # equal rates: D_1 = r/2 - c/(lam+mu), zero when r = 2c/(lam+mu)
    th = naor_threshold(Params(1, 1, 1, 1))
    assert th.n_star == 1 and th.tie and th.knife_edge


def test_cap_too_small():
    with pytest.raises(CapTooSmall) as info:
        naor_threshold(Params(1, 1, 1, 1000), n_cap=5)
    assert info.value.cap == 5 and info.value.d_cap > 0


def test_welfare_values():
    assert threshold_welfare(PARAMS, 0) == 0
    assert [threshold_welfare(PARAMS, n) for n in (1, 2, 3)] == pytest.approx([1, 8 / 7, 17 / 15], rel=1e-13)


def test_curve_csv():
    buf = io.StringIO()
    write_curve_csv(PARAMS, 3, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "n,theta,T,D,W"
    assert len(lines) == 4
    assert float(lines[3].split(",")[3]) == pytest.approx(-1 / 21, rel=1e-12)
    assert [row["n"] for row in curve_rows(PARAMS, 3)] == [1, 2, 3]
