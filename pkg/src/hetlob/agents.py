"""Trader behaviour: expectation formation, CARA demand and order choice."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .lob import VOLUME_LOT, Side

ROOT_RTOL = 1e-10
ROOT_MAX_ITER = 200


class ConfigurationError(ValueError):
    pass


class RootFindingError(ArithmeticError):
    pass


@dataclass(frozen=True)
class BehaviorParams:
    g1: float
    g2: float
    n: float
    tau_i: int
    alpha_i: float


def horizon(tau: int, g1: float, g2: float) -> int:
    return max(1, math.ceil(tau * (1.0 + g1) / (1.0 + g2)))


def risk_aversion(alpha: float, g1: float, g2: float) -> float:
    return alpha * (1.0 + g1) / (1.0 + g2)


def _weight(sigma: float, rng: np.random.Generator) -> float:
    # sigma == 0 degenerates to a point mass at zero; always consume one draw
    # so the stream does not depend on which weights are switched off
    e = rng.standard_exponential()
    return float(sigma * e)


def draw_behavior(
    sigma1: float,
    sigma2: float,
    sigma_n: float,
    tau: int,
    alpha: float,
    rng: np.random.Generator,
) -> BehaviorParams:
    """Draw strategy weights from one-sided exponentials with means ``sigma*``."""
    if min(sigma1, sigma2, sigma_n) < 0:
        raise ConfigurationError("weight scales must be non-negative")
    if sigma1 == 0 and sigma2 == 0 and sigma_n == 0:
        raise ConfigurationError("at least one of sigma1, sigma2, sigma_n must be positive")
    g1 = _weight(sigma1, rng)
    g2 = _weight(sigma2, rng)
    n = _weight(sigma_n, rng)
    if g1 + g2 + n == 0:
        # only reachable through an exact-zero exponential draw
        n = sigma_n if sigma_n > 0 else (sigma1 if sigma1 > 0 else sigma2)
    return BehaviorParams(g1, g2, n, horizon(tau, g1, g2), risk_aversion(alpha, g1, g2))


@dataclass
class Trader:
    """Holdings are integer lots (shares) and integer cash units of one tick x one lot.

    ``shares``/``cash`` are free balances; ``reserved_*`` are committed to the
    trader's resting orders. Demand targets use total holdings, order sizes are
    capped by free balances.
    """

    id: int
    params: BehaviorParams
    shares: int
    cash: int
    reserved_shares: int = 0
    reserved_cash: int = 0

    @property
    def holdings(self) -> int:
        return self.shares + self.reserved_shares

    @property
    def wealth_cash(self) -> int:
        return self.cash + self.reserved_cash


@dataclass(frozen=True)
class Expectation:
    r_hat: float
    p_hat: float
    variance: float


def mean_return(history, tau_i: int) -> float:
    """Mean of the last ``tau_i`` log-returns."""
    window = np.asarray(history[len(history) - tau_i:], dtype=float)
    return float(window.mean())


def variance_estimate(history, tau_i: int, r_bar: float, v_min: float) -> float:
    window = np.asarray(history[len(history) - tau_i:], dtype=float)
    d = window - r_bar
    return max(float(np.dot(d, d)) / tau_i, v_min)


def expected_return(
    g1: float, g2: float, n: float, p_f: float, p_t: float, tau_f: int, r_bar: float, eps: float
) -> float:
    return (g1 * math.log(p_f / p_t) / tau_f + g2 * r_bar + n * eps) / (g1 + g2 + n)


def expected_price(p_t: float, r_hat: float, tau_i: int) -> float:
    return p_t * math.exp(r_hat * tau_i)


def demand(p: float, p_hat: float, alpha_i: float, variance: float) -> float:
    """CARA holding target at price ``p``."""
    return math.log(p_hat / p) / (alpha_i * variance * p)


def _bisect_decreasing(f, lo: float, hi: float) -> float:
    """Root of a decreasing ``f`` with ``f(lo) >= 0 >= f(hi)``."""
    for _ in range(ROOT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        if hi - lo <= ROOT_RTOL * hi or mid in (lo, hi):
            return mid
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    raise RootFindingError(f"bisection did not converge on [{lo}, {hi}]")


# Both roots are found in the log-discount x = ln(p_hat / p) >= 0, where the
# brackets are explicit and tolerance on x is relative tolerance on p.


def satisfaction_price(p_hat: float, alpha_i: float, variance: float, shares: float) -> float:
    """Price ``p*`` at which demand equals current holdings."""
    if shares < 0:
        raise ValueError("shares must be non-negative")
    if shares == 0:
        return p_hat
    k = alpha_i * variance * shares * p_hat
    # x e^x = k has its root in [0, ln(1 + k)]
    x = _bisect_decreasing(lambda x: k * math.exp(-x) - x, 0.0, math.log1p(k))
    return p_hat * math.exp(-x)


def min_price(p_hat: float, alpha_i: float, variance: float, shares: float, cash: float) -> float:
    """Lowest price ``p_m`` the agent can afford: ``p_m (demand(p_m) - S) = C``."""
    if shares < 0 or cash < 0:
        raise ValueError("shares and cash must be non-negative")
    p_star = satisfaction_price(p_hat, alpha_i, variance, shares)
    if cash == 0:
        return p_star
    av = alpha_i * variance
    sp = shares * p_hat
    x_star = math.log(p_hat / p_star)
    # f(x) = C + S p_hat e^-x - x/av is decreasing, f(x*) = C >= 0 and
    # f(av (C + S p_hat)) <= 0
    x = _bisect_decreasing(lambda x: cash + sp * math.exp(-x) - x / av, x_star, av * (cash + sp))
    return p_hat * math.exp(-x)


class OrderKind(str, Enum):
    BUY_LIMIT = "buy_limit"
    BUY_MARKET = "buy_market"
    SELL_LIMIT = "sell_limit"
    SELL_MARKET = "sell_market"
    NONE = "none"

    @property
    def side(self) -> Optional[Side]:
        if self in (OrderKind.BUY_LIMIT, OrderKind.BUY_MARKET):
            return Side.BUY
        if self in (OrderKind.SELL_LIMIT, OrderKind.SELL_MARKET):
            return Side.SELL
        return None

    @property
    def is_market(self) -> bool:
        return self in (OrderKind.BUY_MARKET, OrderKind.SELL_MARKET)


@dataclass(frozen=True)
class OrderIntent:
    kind: OrderKind
    tick: int = 0  # limit price; conversion price for market orders
    qty: int = 0

    @property
    def volume(self) -> float:
        return self.qty * VOLUME_LOT


NO_ORDER = OrderIntent(OrderKind.NONE)


def draw_price_tick(p_m: float, p_max: float, u: float, tick_size: float) -> int:
    """Map a uniform draw ``u`` to a grid price in ``[p_m, p_max]``.

    Rounds to the nearest tick, then pulls back onto the closest grid point
    inside the interval when one exists.
    """
    p = p_m + u * (p_max - p_m)
    tick = int(math.floor(p / tick_size + 0.5))
    lo = math.ceil(p_m / tick_size - 1e-9)
    hi = math.floor(p_max / tick_size + 1e-9)
    if lo <= hi:
        tick = min(max(tick, lo), hi)
    return max(tick, 1)


def decide_order(
    trader: Trader,
    expectation: Expectation,
    p_star: float,
    p_m: float,
    best_bid: Optional[int],
    best_ask: Optional[int],
    drawn_tick: int,
    tick_size: float,
    min_qty: int = 1,
) -> OrderIntent:
    """Choose order type and size from the drawn price and current quotes.

    Quotes and the drawn price are tick counts. Sell sizes are capped by free
    shares and buy sizes so that filling everything at ``drawn_tick`` (the
    worst price a buy can pay) stays within free cash. Intents of ``min_qty``
    lots or fewer are dropped. ``p_star`` and ``p_m`` must come from the
    trader's total holdings.
    """
    p = drawn_tick * tick_size
    alpha_i = trader.params.alpha_i
    p_hat, v = expectation.p_hat, expectation.variance
    s = trader.holdings * VOLUME_LOT

    def target(price: float) -> float:
        return demand(price, p_hat, alpha_i, v)

    if p < p_star:
        if best_ask is not None and best_ask <= drawn_tick:
            kind, size = OrderKind.BUY_MARKET, target(best_ask * tick_size) - s
        else:
            kind, size = OrderKind.BUY_LIMIT, target(p) - s
        qty = min(_lots(size), trader.cash // drawn_tick)
    elif p > p_star:
        if best_bid is not None and best_bid >= drawn_tick:
            kind, size = OrderKind.SELL_MARKET, s - target(best_bid * tick_size)
        else:
            kind, size = OrderKind.SELL_LIMIT, s - target(p)
        qty = min(_lots(size), trader.shares)
    else:
        return NO_ORDER
    if qty <= min_qty:
        return NO_ORDER
    return OrderIntent(kind, drawn_tick, int(qty))


def _lots(volume: float) -> int:
    if not volume > 0:
        return 0
    if volume >= 1e15:
        return 10**21  # capped by the budget clamp immediately after
    return int(volume / VOLUME_LOT)
