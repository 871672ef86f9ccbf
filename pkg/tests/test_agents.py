import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from hetlob.agents import (
    BehaviorParams,
    ConfigurationError,
    Expectation,
    NO_ORDER,
    OrderKind,
    Trader,
    decide_order,
    demand,
    draw_behavior,
    draw_price_tick,
    expected_price,
    expected_return,
    horizon,
    mean_return,
    min_price,
    risk_aversion,
    satisfaction_price,
    variance_estimate,
)
from hetlob.lob import VOLUME_LOT

D = 0.0005

pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


def test_horizon_and_risk_aversion():
    assert horizon(200, 0.0, 0.0) == 200
    assert horizon(200, 1.0, 0.0) == 400
    assert horizon(200, 0.0, 3.0) == 50
    assert horizon(1, 0.0, 1e9) == 1
    assert risk_aversion(0.1, 1.0, 1.0) == pytest.approx(0.1)
    assert risk_aversion(0.1, 3.0, 1.0) == pytest.approx(0.2)


def test_draw_behavior_all_zero_is_config_error():
    with pytest.raises(ConfigurationError):
        draw_behavior(0, 0, 0, 200, 0.1, np.random.default_rng(0))


def test_draw_behavior_consumes_three_draws_and_zeroes_disabled_weights():
    rng = np.random.default_rng(3)
    b = draw_behavior(0.0, 2.0, 1.0, 200, 0.1, rng)
    assert b.g1 == 0.0 and b.g2 > 0 and b.n > 0
    ref = np.random.default_rng(3).standard_exponential(3)
    assert (b.g2, b.n) == pytest.approx((2.0 * ref[1], ref[2]))


def test_weight_means_match_scales():
    rng = np.random.default_rng(4)
    draws = [draw_behavior(10.0, 1.2, 1.0, 200, 0.1, rng) for _ in range(20000)]
    g1 = np.mean([d.g1 for d in draws])
    g2 = np.mean([d.g2 for d in draws])
    assert g1 == pytest.approx(10.0, rel=0.05) and g2 == pytest.approx(1.2, rel=0.05)


def test_mean_and_variance_use_trailing_window():
    h = np.array([5.0, 5.0, 1.0, 2.0, 3.0])
    assert mean_return(h, 3) == pytest.approx(2.0)
    assert variance_estimate(h, 3, 2.0, 1e-8) == pytest.approx(2.0 / 3.0)
    assert variance_estimate(np.zeros(10), 4, 0.0, 1e-8) == 1e-8


def test_expected_return_pure_components():
    # pure fundamentalist: log gap spread over the reversion horizon
    assert expected_return(1.0, 0.0, 0.0, 330.0, 300.0, 100, 0.5, 0.7) == pytest.approx(math.log(1.1) / 100)
    assert expected_return(0.0, 2.0, 0.0, 330.0, 300.0, 100, 0.5, 0.7) == pytest.approx(0.5)
    assert expected_return(0.0, 0.0, 3.0, 330.0, 300.0, 100, 0.5, 0.7) == pytest.approx(0.7)
    assert expected_price(300.0, 0.001, 10) == pytest.approx(300.0 * math.exp(0.01))


@settings(max_examples=300, deadline=None)
@given(p_hat=st.floats(1.0, 1e4), alpha=st.floats(1e-2, 10.0), var=st.floats(1e-6, 1e-2), s=st.floats(0.0, 1e4))
def test_satisfaction_price_matches_lambert_w(p_hat, alpha, var, s):
    k = alpha * var * s * p_hat
    exact = p_hat * math.exp(-lambertw(k).real)
    got = satisfaction_price(p_hat, alpha, var, s)
    assert got == pytest.approx(exact, rel=1e-9)
    assert abs(demand(got, p_hat, alpha, var) - s) <= 1e-8 * max(s, 1.0) or alpha * var * p_hat < 1e-7


@settings(max_examples=300, deadline=None)
@given(p_hat=st.floats(1.0, 1e4), alpha=st.floats(1e-2, 10.0), var=st.floats(1e-6, 1e-2), c=st.floats(0.0, 1e6))
def test_min_price_closed_form_without_shares(p_hat, alpha, var, c):
    x = alpha * var * c
    assume(x < 500)
    got = min_price(p_hat, alpha, var, 0.0, c)
    assert math.log(p_hat / got) == pytest.approx(x, rel=1e-9, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(p_hat=st.floats(1.0, 1e4), alpha=st.floats(1e-2, 10.0), var=st.floats(1e-6, 1e-2),
       s=st.floats(0.0, 1e3), c=st.floats(0.0, 1e5))
def test_min_price_spends_all_cash(p_hat, alpha, var, s, c):
    assume(alpha * var * (c + s * p_hat) < 700)  # keep p_m above float underflow
    p_star = satisfaction_price(p_hat, alpha, var, s)
    p_m = min_price(p_hat, alpha, var, s, c)
    assert 0 < p_m <= p_star <= p_hat
    if c > 0:
        spend = p_m * (demand(p_m, p_hat, alpha, var) - s)
        # bisection is exact in log-price; translate the bracket width into spend
        x = math.log(p_hat / p_m)
        # plus the float resolution of ln(p_hat / p_m) itself
        slack = 1e-9 * (x + 1) * (spend + p_m * s + x / (alpha * var) + 1) + 4e-16 / (alpha * var)
        assert abs(spend - c) <= slack


@settings(max_examples=200, deadline=None)
@given(p_hat=st.floats(1.0, 1e3), alpha=st.floats(1e-2, 1.0), var=st.floats(1e-6, 1e-3),
       s1=st.floats(0.0, 100.0), s2=st.floats(0.0, 100.0))
def test_satisfaction_price_decreasing_in_holdings(p_hat, alpha, var, s1, s2):
    assume(s1 < s2)
    assert satisfaction_price(p_hat, alpha, var, s2) <= satisfaction_price(p_hat, alpha, var, s1)


@settings(max_examples=200, deadline=None)
@given(p_hat=st.floats(1.0, 1e3), alpha=pos, var=st.floats(1e-8, 1e-2), a=st.floats(0.01, 0.99), b=st.floats(0.01, 0.99))
def test_demand_decreasing_in_price(p_hat, alpha, var, a, b):
    assume(a < b)
    assert demand(p_hat * a, p_hat, alpha, var) >= demand(p_hat * b, p_hat, alpha, var)
    assert demand(p_hat, p_hat, alpha, var) == 0.0


@settings(max_examples=300, deadline=None)
@given(p_m=st.floats(0.01, 500.0), width=st.floats(0.0, 50.0), u=st.floats(0.0, 1.0, exclude_max=True))
def test_drawn_tick_stays_inside_interval(p_m, width, u):
    p_max = p_m + width
    t = draw_price_tick(p_m, p_max, u, D)
    if math.ceil(p_m / D - 1e-9) <= math.floor(p_max / D + 1e-9):
        assert p_m - 1e-9 <= t * D <= p_max + 1e-9
    assert t >= 1


# -- order decision table ------------------------------------------------------

P_HAT, ALPHA, VAR = 301.0, 0.1, 1e-4


def _trader(shares_lots, cash_units):
    return Trader(0, BehaviorParams(0.0, 0.0, 1.0, 200, ALPHA), shares_lots, cash_units)


def _decide(trader, drawn_tick, bid, ask):
    e = Expectation(0.0, P_HAT, VAR)
    s = trader.holdings * VOLUME_LOT
    p_star = satisfaction_price(P_HAT, ALPHA, VAR, s)
    p_m = min_price(P_HAT, ALPHA, VAR, s, trader.wealth_cash * D * VOLUME_LOT)
    return decide_order(trader, e, p_star, p_m, bid, ask, drawn_tick, D), p_star


def test_decision_regions():
    tr = _trader(int(10 / VOLUME_LOT), int(1e6 / (D * VOLUME_LOT)))
    _, p_star = _decide(tr, 600_000, None, None)
    star_tick = p_star / D
    below = int(star_tick) - 200
    above = int(star_tick) + 200

    # below p*: buy; market only when the best ask is at or under the drawn price
    o, _ = _decide(tr, below, below - 10, below + 5)
    assert o.kind is OrderKind.BUY_LIMIT
    o, _ = _decide(tr, below, below - 10, below)
    assert o.kind is OrderKind.BUY_MARKET
    o, _ = _decide(tr, below, None, None)
    assert o.kind is OrderKind.BUY_LIMIT
    # above p*: sell; market only when the best bid is at or over the drawn price
    o, _ = _decide(tr, above, above - 5, above + 10)
    assert o.kind is OrderKind.SELL_LIMIT
    o, _ = _decide(tr, above, above, above + 10)
    assert o.kind is OrderKind.SELL_MARKET


def test_decision_sizes_follow_demand():
    tr = _trader(int(10 / VOLUME_LOT), int(1e6 / (D * VOLUME_LOT)))
    _, p_star = _decide(tr, 600_000, None, None)
    below = int(p_star / D) - 400
    o, _ = _decide(tr, below, None, None)
    want = demand(below * D, P_HAT, ALPHA, VAR) - 10
    assert o.volume == pytest.approx(want, abs=2 * VOLUME_LOT)
    ask = below - 100
    o, _ = _decide(tr, below, ask - 50, ask)
    assert o.volume == pytest.approx(demand(ask * D, P_HAT, ALPHA, VAR) - 10, abs=2 * VOLUME_LOT)


def test_sell_capped_by_free_shares_and_buy_by_cash():
    tr = _trader(int(10 / VOLUME_LOT), 0)
    tr.reserved_shares, tr.shares = tr.shares - 5, 5
    _, p_star = _decide(tr, 600_000, None, None)
    o, _ = _decide(tr, int(p_star / D) + 2000, None, None)
    assert o is NO_ORDER or o.qty <= 5
    rich = _trader(0, 10 * 700_000)
    o, _ = _decide(rich, 500_000, None, None)
    assert o.kind is OrderKind.BUY_LIMIT and o.qty * 500_000 <= rich.cash


def test_no_order_at_satisfaction_or_below_minimum():
    tr = _trader(0, 0)
    o, p_star = _decide(tr, int(P_HAT / D), None, None)
    assert p_star == P_HAT and o is NO_ORDER
    poor = _trader(0, 700_000)  # affords one lot at most
    o, _ = _decide(poor, 500_000, None, None)
    assert o is NO_ORDER
