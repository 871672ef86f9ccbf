"""Tick-grid limit order book with price-time priority.

Prices are integer tick counts and volumes are integer lots of
``VOLUME_LOT`` shares, so matching, conservation and level identity are
exact. Real-valued views (``Order.volume``, ``Book.price``) are provided
for reporting.
"""
from __future__ import annotations

import heapq
from bisect import bisect_left, insort
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Tuple

import numpy as np

VOLUME_LOT = 1e-6  # shares per lot; also the smallest admissible order


class Side(str, Enum):
    BUY = "buy"
    SELL = "sell"

    @property
    def opposite(self) -> "Side":
        return Side.SELL if self is Side.BUY else Side.BUY


class OrderError(ValueError):
    """Raised when an order violates the book's preconditions."""


@dataclass(slots=True)
class Order:
    id: int
    agent_id: int
    side: Side
    tick: int
    qty: int
    submit_time: int
    expiry_time: int

    @property
    def volume(self) -> float:
        return self.qty * VOLUME_LOT


@dataclass(frozen=True, slots=True)
class Trade:
    taker_agent: int
    taker_side: Side
    maker_agent: int
    maker_order_id: int
    tick: int
    qty: int
    time: int

    @property
    def volume(self) -> float:
        return self.qty * VOLUME_LOT


@dataclass
class PlacementReport:
    trades: List[Trade] = field(default_factory=list)
    resting: Optional[Order] = None


class Book:
    """Two-sided book of FIFO price levels.

    Each level is an insertion-ordered dict ``order_id -> Order``, which gives
    time priority for free and O(1) removal on expiry.
    """

    def __init__(self, tick_size: float = 0.0005):
        if not tick_size > 0:
            raise ValueError("tick_size must be positive")
        self.tick_size = float(tick_size)
        self._levels = {Side.BUY: {}, Side.SELL: {}}
        # ascending occupied ticks per side
        self._ticks = {Side.BUY: [], Side.SELL: []}
        self._orders: dict[int, Order] = {}
        self._expiry_heap: list[tuple[int, int]] = []
        self._next_id = 0

    # -- bookkeeping -----------------------------------------------------
    def next_order_id(self) -> int:
        oid = self._next_id
        self._next_id += 1
        return oid

    def __len__(self) -> int:
        return len(self._orders)

    def __contains__(self, order_id: int) -> bool:
        return order_id in self._orders

    def price(self, tick: int) -> float:
        return tick * self.tick_size

    def orders(self) -> Iterator[Order]:
        """Resting orders, bids best-first then asks best-first."""
        for side in (Side.BUY, Side.SELL):
            for tick in self._side_ticks_best_first(side):
                yield from self._levels[side][tick].values()

    def levels(self, side: Side) -> List[Tuple[int, int]]:
        """``(tick, total_qty)`` per occupied level, best price first."""
        book = self._levels[side]
        return [(t, sum(o.qty for o in book[t].values())) for t in self._side_ticks_best_first(side)]

    def _side_ticks_best_first(self, side: Side):
        ticks = self._ticks[side]
        return reversed(ticks) if side is Side.BUY else iter(ticks)

    def _rest(self, order: Order) -> None:
        levels = self._levels[order.side]
        level = levels.get(order.tick)
        if level is None:
            level = levels[order.tick] = {}
            insort(self._ticks[order.side], order.tick)
        level[order.id] = order
        self._orders[order.id] = order
        heapq.heappush(self._expiry_heap, (order.expiry_time, order.id))

    def _remove(self, order: Order) -> None:
        levels = self._levels[order.side]
        level = levels[order.tick]
        del level[order.id]
        del self._orders[order.id]
        if not level:
            del levels[order.tick]
            ticks = self._ticks[order.side]
            del ticks[bisect_left(ticks, order.tick)]

    # -- quotes ----------------------------------------------------------
    def best_bid(self) -> Optional[int]:
        t = self._ticks[Side.BUY]
        return t[-1] if t else None

    def best_ask(self) -> Optional[int]:
        t = self._ticks[Side.SELL]
        return t[0] if t else None

    def best_quotes(self) -> Tuple[Optional[int], Optional[int]]:
        return self.best_bid(), self.best_ask()

    def midpoint(self) -> Optional[float]:
        bid, ask = self.best_quotes()
        if bid is None or ask is None:
            return None
        return 0.5 * (bid + ask) * self.tick_size

    def first_gap(self, side: Side) -> Optional[float]:
        """Distance between the best and next-best occupied level, in price units."""
        ticks = self._ticks[side]
        if len(ticks) < 2:
            return None
        if side is Side.BUY:
            return (ticks[-1] - ticks[-2]) * self.tick_size
        return (ticks[1] - ticks[0]) * self.tick_size

    def depth_profile(self, midpoint: float, max_ticks: int) -> np.ndarray:
        """Signed resting volume by tick offset from the midpoint tick.

        Index ``k + max_ticks`` holds offset ``k`` in ``[-max_ticks, max_ticks]``;
        bids are positive, asks negative. Levels beyond the window are dropped.
        """
        if max_ticks <= 0:
            raise ValueError("max_ticks must be positive")
        profile = np.zeros(2 * max_ticks + 1)
        # half-tick midpoints round up; the epsilon absorbs float error in midpoint / tick_size
        mid_tick = int(np.floor(midpoint / self.tick_size + 0.5 + 1e-9))
        for side, sign in ((Side.BUY, 1.0), (Side.SELL, -1.0)):
            for tick, level in self._levels[side].items():
                k = tick - mid_tick
                if -max_ticks <= k <= max_ticks:
                    profile[k + max_ticks] += sign * sum(o.qty for o in level.values()) * VOLUME_LOT
        return profile

    # -- order flow ------------------------------------------------------
    def _validate(self, qty: int, tick: int) -> None:
        if not isinstance(qty, (int, np.integer)) or qty <= 0:
            raise OrderError(f"order volume must be a positive lot count, got {qty!r}")
        if not isinstance(tick, (int, np.integer)) or tick < 1:
            raise OrderError(f"order price must be a tick count >= 1, got {tick!r}")

    def _match(self, agent_id: int, side: Side, qty: int, limit_tick: int, now: int) -> Tuple[List[Trade], int]:
        opp = side.opposite
        levels = self._levels[opp]
        ticks = self._ticks[opp]
        trades: List[Trade] = []
        while qty > 0 and ticks:
            best = ticks[0] if side is Side.BUY else ticks[-1]
            if (side is Side.BUY and best > limit_tick) or (side is Side.SELL and best < limit_tick):
                break
            level = levels[best]
            while qty > 0 and level:
                maker = next(iter(level.values()))
                fill = min(qty, maker.qty)
                trades.append(Trade(agent_id, side, maker.agent_id, maker.id, best, fill, now))
                qty -= fill
                maker.qty -= fill
                if maker.qty == 0:
                    del level[maker.id]
                    del self._orders[maker.id]
            if not level:
                del levels[best]
                if side is Side.BUY:
                    del ticks[0]
                else:
                    ticks.pop()
        return trades, qty

    def submit_limit(self, order: Order) -> PlacementReport:
        """Rest a limit order; if it crosses, execute up to its own price first."""
        self._validate(order.qty, order.tick)
        if order.id in self._orders:
            raise OrderError(f"duplicate order id {order.id}")
        trades, remaining = self._match(order.agent_id, order.side, order.qty, order.tick, order.submit_time)
        report = PlacementReport(trades)
        if remaining > 0:
            order.qty = remaining
            self._rest(order)
            report.resting = order
        return report

    def execute_market(
        self,
        agent_id: int,
        side: Side,
        qty: int,
        limit_tick: int,
        now: int,
        expiry_time: int,
    ) -> Tuple[List[Trade], Optional[Order]]:
        """Walk the opposite side best-first while quotes are within ``limit_tick``
        (inclusive); any unfilled remainder rests as a limit order at ``limit_tick``.
        """
        self._validate(qty, limit_tick)
        trades, remaining = self._match(agent_id, side, qty, limit_tick, now)
        remainder = None
        if remaining > 0:
            remainder = Order(self.next_order_id(), agent_id, side, limit_tick, remaining, now, expiry_time)
            self._rest(remainder)
        return trades, remainder

    def cancel_expired(self, now: int) -> List[Order]:
        """Remove every resting order with ``expiry_time <= now``."""
        removed = []
        heap = self._expiry_heap
        while heap and heap[0][0] <= now:
            _, oid = heapq.heappop(heap)
            order = self._orders.get(oid)
            # filled orders leave stale heap entries behind
            if order is not None and order.expiry_time <= now:
                self._remove(order)
                removed.append(order)
        return removed
