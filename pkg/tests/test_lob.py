import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hetlob.lob import VOLUME_LOT, Book, Order, OrderError, Side

from reference import ReferenceBook, random_stream, replay_against_book

D = 0.0005


def limit(book, side, tick, qty, agent=0, now=0, expiry=100):
    return book.submit_limit(Order(book.next_order_id(), agent, side, tick, qty, now, expiry))


def test_limit_rests_without_trading():
    b = Book(D)
    limit(b, Side.SELL, 110, 5)
    rep = limit(b, Side.BUY, 105, 3)
    assert rep.trades == [] and rep.resting is not None
    assert b.best_quotes() == (105, 110)


def test_limit_into_empty_book_sets_best_bid():
    b = Book(D)
    limit(b, Side.BUY, 100, 1)
    assert b.best_quotes() == (100, None)


def test_crossing_limit_fills_oldest_first():
    b = Book(D)
    first = limit(b, Side.SELL, 100, 5, agent=1).resting
    limit(b, Side.SELL, 100, 5, agent=2)
    rep = limit(b, Side.BUY, 100, 3, agent=9)
    assert [(t.maker_order_id, t.qty, t.tick) for t in rep.trades] == [(first.id, 3, 100)]
    assert rep.resting is None
    assert b.levels(Side.SELL) == [(100, 7)]


def test_market_walks_levels_and_rests_remainder():
    b = Book(D)
    for tick in (101, 102, 105):
        limit(b, Side.SELL, tick, 1)
    trades, rest = b.execute_market(7, Side.BUY, 3, 103, now=1, expiry_time=9)
    assert [(t.tick, t.qty) for t in trades] == [(101, 1), (102, 1)]
    assert rest is not None and (rest.tick, rest.qty, rest.side, rest.expiry_time) == (103, 1, Side.BUY, 9)
    assert b.best_quotes() == (103, 105)


def test_market_into_empty_side_converts_everything():
    b = Book(D)
    trades, rest = b.execute_market(0, Side.BUY, 4, 50, now=0, expiry_time=3)
    assert trades == [] and rest.qty == 4 and b.best_bid() == 50


def test_market_sell_consumes_exact_level():
    b = Book(D)
    limit(b, Side.BUY, 90, 2)
    limit(b, Side.BUY, 90, 3)
    limit(b, Side.BUY, 80, 1)
    trades, rest = b.execute_market(1, Side.SELL, 5, 90, now=0, expiry_time=5)
    assert rest is None and all(t.tick == 90 for t in trades) and sum(t.qty for t in trades) == 5
    assert b.best_bid() == 80


def test_walk_is_inclusive_at_limit():
    b = Book(D)
    limit(b, Side.SELL, 103, 2)
    trades, rest = b.execute_market(0, Side.BUY, 2, 103, now=0, expiry_time=5)
    assert sum(t.qty for t in trades) == 2 and rest is None


@pytest.mark.parametrize("qty,tick", [(0, 10), (-1, 10), (1.5, 10), (1, 0), (1, 2.5)])
def test_rejects_bad_orders(qty, tick):
    b = Book(D)
    with pytest.raises(OrderError):
        b.submit_limit(Order(0, 0, Side.BUY, tick, qty, 0, 1))
    with pytest.raises(OrderError):
        b.execute_market(0, Side.BUY, qty, tick, 0, 1)


def test_expiry_threshold():
    b = Book(D)
    assert b.cancel_expired(0) == []
    a = limit(b, Side.BUY, 10, 1, expiry=5).resting
    c = limit(b, Side.BUY, 11, 1, expiry=10).resting
    assert [o.id for o in b.cancel_expired(7)] == [a.id]
    assert c.id in b and a.id not in b


def test_expiry_matches_brute_force():
    rng = np.random.default_rng(0)
    b = Book(D)
    orders = []
    for _ in range(1000):
        side = Side.BUY if rng.random() < 0.5 else Side.SELL
        tick = int(rng.integers(1, 500)) if side is Side.BUY else int(rng.integers(501, 1000))
        orders.append(limit(b, side, tick, int(rng.integers(1, 9)), expiry=int(rng.integers(0, 100))).resting)
    now = 37
    want = sorted(o.id for o in orders if o.expiry_time <= now)
    assert sorted(o.id for o in b.cancel_expired(now)) == want
    assert all(o.expiry_time > now for o in b.orders())


def test_quotes_and_gaps():
    b = Book(D)
    assert b.best_quotes() == (None, None) and b.midpoint() is None
    limit(b, Side.SELL, 100, 1)
    assert b.first_gap(Side.SELL) is None
    limit(b, Side.SELL, 103, 1)
    assert b.first_gap(Side.SELL) == pytest.approx(3 * D, abs=1e-15)
    limit(b, Side.BUY, 90, 1)
    assert b.midpoint() == pytest.approx(95 * D)


def test_random_book_quotes_gaps_depth_match_scan():
    rng = np.random.default_rng(1)
    b = Book(D)
    for _ in range(400):
        side = Side.BUY if rng.random() < 0.5 else Side.SELL
        tick = int(rng.integers(800, 1000)) if side is Side.BUY else int(rng.integers(1001, 1200))
        limit(b, side, tick, int(rng.integers(1, 20)))
    bids = sorted({o.tick for o in b.orders() if o.side is Side.BUY}, reverse=True)
    asks = sorted({o.tick for o in b.orders() if o.side is Side.SELL})
    assert b.best_quotes() == (bids[0], asks[0])
    assert b.first_gap(Side.BUY) == pytest.approx((bids[0] - bids[1]) * D)
    assert b.first_gap(Side.SELL) == pytest.approx((asks[1] - asks[0]) * D)
    mid = b.midpoint()
    m = 150
    prof = b.depth_profile(mid, m)
    want = np.zeros(2 * m + 1)
    mid_tick = int(np.floor(mid / D + 0.5 + 1e-9))
    for o in b.orders():
        k = o.tick - mid_tick
        if abs(k) <= m:
            want[k + m] += (1 if o.side is Side.BUY else -1) * o.qty * VOLUME_LOT
    np.testing.assert_allclose(prof, want, rtol=0, atol=1e-15)


def test_depth_profile_single_bid():
    b = Book(D)
    assert not b.depth_profile(1.0, 5).any()
    limit(b, Side.BUY, 1998, 5)
    prof = b.depth_profile(2000 * D, 5)
    assert prof[3] == pytest.approx(5 * VOLUME_LOT) and np.count_nonzero(prof) == 1


def test_oracle_equivalence_ten_thousand_events():
    assert replay_against_book(10_000, seed=11) == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oracle_equivalence_short_streams(seed):
    assert replay_against_book(300, seed) == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_invariants_on_random_streams(seed):
    """Volume conservation, no crossed book, price and time priority."""
    b = Book(D)
    for kind, agent, side, tick, qty, now, expiry in random_stream(400, seed):
        if kind == "expire":
            b.cancel_expired(now)
            assert all(o.expiry_time > now for o in b.orders())
            continue
        s = Side(side)
        before = {o.id: (o.tick, o.qty) for o in b.orders() if o.side is s.opposite}
        if kind == "market":
            trades, rest = b.execute_market(agent, s, qty, tick, now, expiry)
            rem = 0 if rest is None else rest.qty
        else:
            rep = b.submit_limit(Order(b.next_order_id(), agent, s, tick, qty, now, expiry))
            trades, rem = rep.trades, (0 if rep.resting is None else rep.resting.qty)
        assert sum(t.qty for t in trades) + rem == qty
        # fills are monotone in price, and each fill's maker is the oldest at its level
        ticks = [t.tick for t in trades]
        assert ticks == sorted(ticks, reverse=(s is Side.SELL))
        for t in trades:
            same_level_older = [oid for oid, (tk, _) in before.items() if tk == t.tick and oid < t.maker_order_id]
            assert not same_level_older
            left = before[t.maker_order_id][1] - t.qty
            if left:
                before[t.maker_order_id] = (t.tick, left)
            else:
                del before[t.maker_order_id]
        bid, ask = b.best_quotes()
        assert bid is None or ask is None or bid < ask


def test_reference_detects_fifo_violation():
    """Sanity: the oracle is sensitive to a swapped fill order."""
    ref = ReferenceBook()
    ref.submit_limit(0, 1, "sell", 100, 1, 0, 9)
    ref.submit_limit(1, 2, "sell", 100, 1, 0, 9)
    trades, _ = ref.execute_market(2, 3, "buy", 1, 100, 0, 9)
    assert trades[0][3] == 0
