"""Single-asset double-auction simulation driven by heterogeneous traders."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .agents import (
    ConfigurationError,
    Expectation,
    OrderKind,
    Trader,
    decide_order,
    draw_behavior,
    draw_price_tick,
    expected_price,
    expected_return,
    mean_return,
    min_price,
    satisfaction_price,
    variance_estimate,
)
from .lob import VOLUME_LOT, Book, Order, Side, Trade


class InvariantViolation(RuntimeError):
    """Raised when balances, escrow or the book reach an impossible state."""


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of one simulated market."""

    n_agents: int = 5000
    sigma1: float = 0.0
    sigma2: float = 0.0
    sigma_n: float = 1.0
    tau: int = 200
    tau_f: Optional[int] = None  # None: each agent uses its own horizon tau_i
    alpha: float = 0.1
    delta: float = 0.0005
    sigma_eps: float = 1e-4
    sigma_eps_mode: str = "std"
    p_f0: float = 300.0
    sigma_f: float = 1e-3
    n_s: float = 50.0
    cash_max: Optional[float] = None  # defaults to n_s * p_f0
    v_min: float = 1e-8
    min_order_volume: float = VOLUME_LOT

    def validate(self) -> None:
        if self.n_agents < 1:
            raise ConfigurationError("n_agents must be >= 1")
        if self.tau < 1 or (self.tau_f is not None and self.tau_f < 1):
            raise ConfigurationError("tau and tau_f must be >= 1")
        for name in ("sigma1", "sigma2", "sigma_n", "sigma_eps", "sigma_f", "n_s"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.sigma1 == 0 and self.sigma2 == 0 and self.sigma_n == 0:
            raise ConfigurationError("at least one of sigma1, sigma2, sigma_n must be positive")
        for name in ("alpha", "delta", "p_f0", "v_min", "min_order_volume"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.cash_max is not None and self.cash_max < 0:
            raise ConfigurationError("cash_max must be non-negative")
        if self.sigma_eps_mode not in ("std", "var"):
            raise ConfigurationError("sigma_eps_mode must be 'std' or 'var'")

    @property
    def eps_scale(self) -> float:
        return self.sigma_eps if self.sigma_eps_mode == "std" else math.sqrt(self.sigma_eps)

    @property
    def wealth_cap(self) -> float:
        return self.n_s * self.p_f0 if self.cash_max is None else self.cash_max


@dataclass
class FundamentalProcess:
    p_f0: float = 300.0
    sigma_f: float = 1e-3
    state: float = field(default=None)

    def __post_init__(self):
        if self.state is None:
            self.state = self.p_f0


def fundamental_step(proc: FundamentalProcess, rng: np.random.Generator) -> float:
    """Advance the log-space random walk by one step and return the new value."""
    xi = rng.standard_normal()
    proc.state = proc.state * math.exp(proc.sigma_f * xi)
    return proc.state


@dataclass(frozen=True)
class Submission:
    agent: int
    kind: OrderKind
    tick: int
    distance: float  # |order price - reference midpoint| at submission
    volume: float


@dataclass
class StepRecord:
    time: int
    price: float
    log_return: float
    fundamental: float
    best_bid: Optional[float]
    best_ask: Optional[float]
    gap_bid: Optional[float]
    gap_ask: Optional[float]
    trades: List[Trade]
    submission: Optional[Submission]
    expiries: int


@dataclass
class EventLog:
    params: ModelParams
    seed: int
    records: List[StepRecord] = field(default_factory=list)
    # (time, side, tick, lots) per occupied level, taken every ``snapshot_every`` steps
    snapshots: List[Tuple[int, str, int, int]] = field(default_factory=list)

    def prices(self) -> np.ndarray:
        return np.array([r.price for r in self.records])

    def returns(self) -> np.ndarray:
        return np.array([r.log_return for r in self.records])

    def fundamentals(self) -> np.ndarray:
        return np.array([r.fundamental for r in self.records])


class _History:
    """Growable float buffer of log-returns."""

    def __init__(self, initial: np.ndarray):
        self._buf = np.zeros(max(2 * len(initial), 1024))
        self._buf[: len(initial)] = initial
        self._n = len(initial)

    def append(self, r: float) -> None:
        if self._n == len(self._buf):
            self._buf = np.concatenate([self._buf, np.zeros(len(self._buf))])
        self._buf[self._n] = r
        self._n += 1

    def view(self) -> np.ndarray:
        return self._buf[: self._n]

    def __len__(self) -> int:
        return self._n


class Market:
    """Mutable market state plus the one-agent-per-step update rule.

    Cash is held as integers in units of ``delta * VOLUME_LOT`` so that an
    order of ``q`` lots at ``t`` ticks costs exactly ``t * q`` units.
    """

    def __init__(self, params: ModelParams, seed: int):
        params.validate()
        self.params = params
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.book = Book(params.delta)
        self.fundamental = FundamentalProcess(params.p_f0, params.sigma_f)
        self.cash_unit = params.delta * VOLUME_LOT
        self.min_qty = max(1, int(round(params.min_order_volume / VOLUME_LOT)))
        rng = self.rng
        self.traders: List[Trader] = []
        for i in range(params.n_agents):
            b = draw_behavior(params.sigma1, params.sigma2, params.sigma_n, params.tau, params.alpha, rng)
            shares = int(rng.uniform(0.0, params.n_s) / VOLUME_LOT)
            cash = int(rng.uniform(0.0, params.wealth_cap) / self.cash_unit)
            self.traders.append(Trader(i, b, shares, cash))
        warmup = max(t.params.tau_i for t in self.traders)
        self.history = _History(np.zeros(warmup))
        self.price = params.p_f0
        self.clock = 0
        self.total_shares = sum(t.shares for t in self.traders)
        self.total_cash = sum(t.cash for t in self.traders)

    # -- settlement ------------------------------------------------------
    def settle(self, trade: Trade) -> None:
        """Transfer cash and shares for one fill at the maker's price.

        The maker's side of the trade is paid out of its reservation.
        """
        taker = self.traders[trade.taker_agent]
        maker = self.traders[trade.maker_agent]
        amount = trade.tick * trade.qty
        if trade.taker_side is Side.BUY:
            taker.cash -= amount
            taker.shares += trade.qty
            maker.reserved_shares -= trade.qty
            maker.cash += amount
        else:
            # a resting bid reserved cash at its own tick, which is the trade price
            taker.shares -= trade.qty
            taker.cash += amount
            maker.reserved_cash -= amount
            maker.shares += trade.qty
        if min(taker.cash, taker.shares, maker.reserved_cash, maker.reserved_shares) < 0:
            raise InvariantViolation(f"negative balance settling {trade}")

    def _escrow(self, order: Order) -> None:
        trader = self.traders[order.agent_id]
        if order.side is Side.BUY:
            amount = order.tick * order.qty
            trader.cash -= amount
            trader.reserved_cash += amount
        else:
            trader.shares -= order.qty
            trader.reserved_shares += order.qty
        if trader.cash < 0 or trader.shares < 0:
            raise InvariantViolation(f"escrow shortfall for trader {trader.id} on {order}")

    def _refund(self, order: Order) -> None:
        trader = self.traders[order.agent_id]
        if order.side is Side.BUY:
            amount = order.tick * order.qty
            trader.cash += amount
            trader.reserved_cash -= amount
        else:
            trader.shares += order.qty
            trader.reserved_shares -= order.qty

    # -- dynamics --------------------------------------------------------
    def expectation(self, trader: Trader, eps: float) -> Expectation:
        prm = self.params
        b = trader.params
        hist = self.history.view()
        r_bar = mean_return(hist, b.tau_i)
        var = variance_estimate(hist, b.tau_i, r_bar, prm.v_min)
        tau_f = b.tau_i if prm.tau_f is None else prm.tau_f
        r_hat = expected_return(b.g1, b.g2, b.n, self.fundamental.state, self.price, tau_f, r_bar, eps)
        return Expectation(r_hat, expected_price(self.price, r_hat, b.tau_i), var)

    def step(self) -> StepRecord:
        prm = self.params
        rng = self.rng
        book = self.book
        t = self.clock
        delta = prm.delta

        p_f = fundamental_step(self.fundamental, rng)
        expired = book.cancel_expired(t)
        for order in expired:
            self._refund(order)

        trader = self.traders[int(rng.integers(prm.n_agents))]
        eps = float(rng.standard_normal()) * prm.eps_scale
        u = float(rng.random())

        exp_ = self.expectation(trader, eps)
        b = trader.params
        s = trader.holdings * VOLUME_LOT
        c = trader.wealth_cash * self.cash_unit
        p_star = satisfaction_price(exp_.p_hat, b.alpha_i, exp_.variance, s)
        p_m = min_price(exp_.p_hat, b.alpha_i, exp_.variance, s, c)
        tick = draw_price_tick(p_m, exp_.p_hat, u, delta)
        bid, ask = book.best_quotes()
        reference = book.midpoint()
        if reference is None:
            reference = self.price
        intent = decide_order(trader, exp_, p_star, p_m, bid, ask, tick, delta, self.min_qty)

        trades: List[Trade] = []
        submission = None
        if intent.qty > 0:
            side = intent.kind.side
            expiry = t + b.tau_i
            if intent.kind.is_market:
                trades, rest = book.execute_market(trader.id, side, intent.qty, intent.tick, t, expiry)
            else:
                order = Order(book.next_order_id(), trader.id, side, intent.tick, intent.qty, t, expiry)
                report = book.submit_limit(order)
                trades, rest = report.trades, report.resting
            for trade in trades:
                self.settle(trade)
            if rest is not None:
                self._escrow(rest)
            submission = Submission(
                trader.id, intent.kind, intent.tick, abs(intent.tick * delta - reference), intent.volume
            )

        bid, ask = book.best_quotes()
        previous = self.price
        if trades:
            self.price = trades[-1].tick * delta
        elif bid is not None and ask is not None:
            self.price = 0.5 * (bid + ask) * delta
        r = math.log(self.price / previous)
        self.history.append(r)
        self.clock += 1
        return StepRecord(
            time=t,
            price=self.price,
            log_return=r,
            fundamental=p_f,
            best_bid=None if bid is None else bid * delta,
            best_ask=None if ask is None else ask * delta,
            gap_bid=book.first_gap(Side.BUY),
            gap_ask=book.first_gap(Side.SELL),
            trades=trades,
            submission=submission,
            expiries=len(expired),
        )

    # -- audit -----------------------------------------------------------
    def escrowed(self) -> Tuple[int, int]:
        """``(shares, cash)`` committed to resting sell and buy orders."""
        shares = cash = 0
        for o in self.book.orders():
            if o.side is Side.SELL:
                shares += o.qty
            else:
                cash += o.tick * o.qty
        return shares, cash

    def check_invariants(self) -> None:
        """Raise ``InvariantViolation`` unless balances, reservations and the book agree."""
        res_shares = [0] * len(self.traders)
        res_cash = [0] * len(self.traders)
        for o in self.book.orders():
            if o.side is Side.SELL:
                res_shares[o.agent_id] += o.qty
            else:
                res_cash[o.agent_id] += o.tick * o.qty
        for t in self.traders:
            if min(t.shares, t.cash) < 0:
                raise InvariantViolation(f"negative balance for trader {t.id}")
            if t.reserved_shares != res_shares[t.id] or t.reserved_cash != res_cash[t.id]:
                raise InvariantViolation(f"reservation of trader {t.id} does not match its resting orders")
        shares = sum(t.shares for t in self.traders) + sum(res_shares)
        cash = sum(t.cash for t in self.traders) + sum(res_cash)
        if shares != self.total_shares:
            raise InvariantViolation(f"share total drifted: {shares} != {self.total_shares}")
        if cash != self.total_cash:
            raise InvariantViolation(f"cash total drifted: {cash} != {self.total_cash}")
        bid, ask = self.book.best_quotes()
        if bid is not None and ask is not None and bid >= ask:
            raise InvariantViolation(f"crossed book: bid {bid} >= ask {ask}")
        if not (self.price > 0 and self.fundamental.state > 0):
            raise InvariantViolation("non-positive price")

    def snapshot(self) -> List[Tuple[int, str, int, int]]:
        rows = []
        for side in (Side.BUY, Side.SELL):
            for tick, lots in self.book.levels(side):
                rows.append((self.clock, side.value, tick, lots))
        return rows


def run(
    params: ModelParams,
    n_steps: int,
    seed: int,
    *,
    snapshot_every: int = 0,
    audit: bool = False,
) -> Tuple[EventLog, Market]:
    """Simulate ``n_steps`` steps; deterministic in ``(params, seed)``."""
    if n_steps < 1:
        raise ConfigurationError("n_steps must be >= 1")
    market = Market(params, seed)
    log = EventLog(params, seed)
    for _ in range(n_steps):
        log.records.append(market.step())
        if audit:
            market.check_invariants()
        if snapshot_every and market.clock % snapshot_every == 0:
            log.snapshots.extend(market.snapshot())
    return log, market


def params_dict(params: ModelParams) -> dict:
    return asdict(params)
