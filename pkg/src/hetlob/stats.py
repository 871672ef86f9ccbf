"""Estimators for price, order-flow and book regularities.

Functions are pure. ``HillEstimator``, ``ModifiedRescaledRange`` and
``VolatilityAutocorrelation`` wrap them behind the scikit-learn estimator
protocol (``fit`` / ``get_params``) so they can sit in pipelines and grid
searches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

SIDES = ("right", "left", "abs")


class EstimationError(ValueError):
    pass


def _as_vector(x) -> np.ndarray:
    return check_array(np.asarray(x, dtype=float), ensure_2d=False, ensure_min_samples=0).ravel()


# -- distributions -----------------------------------------------------------

def ddf(samples) -> Tuple[np.ndarray, np.ndarray]:
    """Decumulative distribution ``P(X > x)`` at every distinct sample value."""
    x = np.sort(_as_vector(samples))
    if x.size == 0:
        raise EstimationError("ddf of an empty sample")
    values, counts = np.unique(x, return_counts=True)
    exceed = x.size - np.cumsum(counts)
    return values, exceed / x.size


def ddf_points(samples, max_points: int = 256) -> Tuple[np.ndarray, np.ndarray]:
    """``ddf`` thinned to at most ``max_points`` rows, always keeping both ends."""
    values, probs = ddf(samples)
    if values.size <= max_points:
        return values, probs
    idx = np.unique(np.linspace(0, values.size - 1, max_points).round().astype(int))
    return values[idx], probs[idx]


# -- tail index --------------------------------------------------------------

@dataclass(frozen=True)
class TailEstimate:
    gamma_hat: float
    beta_hat: float
    k: int
    stderr_gamma: float
    degenerate: bool = False

    @property
    def stderr_beta(self) -> float:
        # delta method on beta = 1/gamma
        return self.stderr_gamma / self.gamma_hat**2 if self.gamma_hat > 0 else math.inf


def tail_sample(samples, side: str = "abs") -> np.ndarray:
    """Strictly positive magnitudes for one tail: ``right`` keeps x > 0,
    ``left`` keeps -x for x < 0, ``abs`` keeps |x| for x != 0."""
    x = _as_vector(samples)
    if side == "right":
        return x[x > 0]
    if side == "left":
        return -x[x < 0]
    if side == "abs":
        return np.abs(x[x != 0])
    raise ValueError(f"side must be one of {SIDES}, got {side!r}")


def hill(samples, tail_fraction: float = 0.05, side: str = "abs") -> TailEstimate:
    """Hill estimate of the inverse tail index from the top ``k`` order statistics.

    ``k = floor(tail_fraction * n)`` where ``n`` counts the selected tail's
    positive magnitudes; the threshold is the ``(k+1)``-th largest value.
    """
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    x = tail_sample(samples, side)
    n = x.size
    k = int(math.floor(tail_fraction * n))
    if k < 2 or k >= n:
        raise EstimationError(f"need k >= 2 tail observations, got k={k} from n={n}")
    top = np.sort(np.partition(x, n - k - 1)[n - k - 1:])[::-1]  # k+1 largest, descending
    logs = np.log(top)
    gamma = float(np.mean(logs[:k]) - logs[k])
    if gamma <= 0:
        return TailEstimate(0.0, math.inf, k, 0.0, degenerate=True)
    return TailEstimate(gamma, 1.0 / gamma, k, gamma / math.sqrt(k))


@dataclass(frozen=True)
class TailAggregate:
    """Cross-repetition summary of Hill estimates.

    ``stderr_gamma`` is the standard error of the mean inverse index;
    ``beta_band`` is the tail-index half-width ``stderr_gamma / (mean^2 sqrt(N))``.
    """

    n: int
    mean_gamma: float
    stderr_gamma: float
    beta: float
    stderr_beta: float
    beta_band: float


def aggregate_tail(gammas: Iterable[float]) -> TailAggregate:
    g = np.asarray([v for v in gammas if np.isfinite(v)], dtype=float)
    n = g.size
    if n == 0:
        nan = math.nan
        return TailAggregate(0, nan, nan, nan, nan, nan)
    mean = float(g.mean())
    se = float(math.sqrt(np.sum((g - mean) ** 2) / (n * (n - 1)))) if n > 1 else math.nan
    beta = 1.0 / mean if mean > 0 else math.inf
    se_beta = se / mean**2 if mean > 0 else math.nan
    return TailAggregate(n, mean, se, beta, se_beta, se_beta / math.sqrt(n))


# -- memory ------------------------------------------------------------------

def autocorrelation(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation ``C_j`` for ``j = 0..max_lag`` around the full-sample mean."""
    x = _as_vector(series)
    if max_lag < 0 or x.size <= max_lag:
        raise EstimationError("series must be longer than max_lag")
    d = x - x.mean()
    var = float(np.dot(d, d))
    if var == 0:
        raise EstimationError("autocorrelation of a constant series")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for j in range(1, max_lag + 1):
        out[j] = np.dot(d[j:], d[:-j]) / var
    return out


def rs_statistic(window, q: int = 0) -> float:
    """Lo's modified rescaled range of one window; ``q = 0`` is classical R/S."""
    x = _as_vector(window)
    n = x.size
    if not 0 <= q < n:
        raise EstimationError(f"need 0 <= q < n, got q={q}, n={n}")
    d = x - x.mean()
    partial = np.cumsum(d)
    spread = float(partial.max() - partial.min())
    v = float(np.dot(d, d)) / n
    for j in range(1, q + 1):
        v += 2.0 * (1.0 - j / (q + 1.0)) * float(np.dot(d[j:], d[:-j])) / n
    if not v > 0:
        raise EstimationError("non-positive long-run variance estimate")
    return spread / math.sqrt(v)


@dataclass(frozen=True)
class LongMemoryEstimate:
    q: int
    n: int
    Q_n: float
    beta_n: float
    windows: int


def modified_rs(series, n: int, q: int = 20) -> LongMemoryEstimate:
    """``beta_n = ln Q_n / ln n`` averaged over non-overlapping length-``n`` windows.

    ``Q_n`` is reported as the geometric mean over windows, so that
    ``beta_n == ln(Q_n) / ln(n)`` holds for the aggregate too.
    """
    x = _as_vector(series)
    if n < 2 or n > x.size:
        raise EstimationError(f"window length {n} must lie in [2, {x.size}]")
    m = x.size // n
    betas = [math.log(rs_statistic(x[i * n:(i + 1) * n], q)) / math.log(n) for i in range(m)]
    beta = float(np.mean(betas))
    return LongMemoryEstimate(q, n, float(n**beta), beta, m)


# -- event-log derived samples ----------------------------------------------

def gap_distribution(records) -> Dict[str, np.ndarray]:
    """First-gap sizes recorded at the end of each step, per side."""
    bid = [r.gap_bid for r in records if r.gap_bid is not None]
    ask = [r.gap_ask for r in records if r.gap_ask is not None]
    return {"bid": np.asarray(bid, dtype=float), "ask": np.asarray(ask, dtype=float)}


def placement_distance_distribution(records) -> Dict[str, np.ndarray]:
    """Distance of each new limit order from the midpoint it saw on arrival."""
    out: Dict[str, List[float]] = {"buy": [], "sell": []}
    for r in records:
        s = r.submission
        if s is None or s.kind.is_market:
            continue
        out[s.kind.side.value].append(s.distance)
    return {k: np.asarray(v, dtype=float) for k, v in out.items()}


def market_order_sizes(records) -> Dict[str, np.ndarray]:
    out: Dict[str, List[float]] = {"buy": [], "sell": []}
    for r in records:
        s = r.submission
        if s is not None and s.kind.is_market:
            out[s.kind.side.value].append(s.volume)
    return {k: np.asarray(v, dtype=float) for k, v in out.items()}


SIZE_BUCKETS = ("small", "medium", "large")


@dataclass
class ConditionalReturns:
    samples: Dict[str, np.ndarray]
    ddfs: Dict[str, Optional[Tuple[np.ndarray, np.ndarray]]]

    @property
    def empty(self) -> List[str]:
        return [b for b in SIZE_BUCKETS if self.samples[b].size == 0]


def conditional_return_ddfs(records, size_breaks: Sequence[float] = (15.0, 30.0)) -> ConditionalReturns:
    """|return| of each step that carried a market order, bucketed by order size.

    Buckets are ``size < lo``, ``lo <= size <= hi`` and ``size > hi``.
    """
    lo, hi = size_breaks
    buckets: Dict[str, List[float]] = {b: [] for b in SIZE_BUCKETS}
    for r in records:
        s = r.submission
        if s is None or not s.kind.is_market:
            continue
        name = "small" if s.volume < lo else ("medium" if s.volume <= hi else "large")
        buckets[name].append(abs(r.log_return))
    samples = {b: np.asarray(v, dtype=float) for b, v in buckets.items()}
    ddfs = {b: (ddf(v) if v.size else None) for b, v in samples.items()}
    return ConditionalReturns(samples, ddfs)


def profiles_from_snapshots(rows, tick_size: float, max_ticks: int) -> List[np.ndarray]:
    """Signed depth profiles around the midpoint for each two-sided snapshot.

    ``rows`` are ``(time, side, tick, lots_or_volume)`` as written by the
    runner; the 4th column is treated as volume already in shares.
    """
    by_time: Dict[int, List[Tuple[str, int, float]]] = {}
    for t, side, tick, vol in rows:
        by_time.setdefault(int(t), []).append((str(side), int(tick), float(vol)))
    profiles = []
    for t in sorted(by_time):
        levels = by_time[t]
        bids = [tick for side, tick, _ in levels if side == "buy"]
        asks = [tick for side, tick, _ in levels if side == "sell"]
        if not bids or not asks:
            continue
        mid_tick = int(math.floor(0.5 * (max(bids) + min(asks)) + 0.5))
        profile = np.zeros(2 * max_ticks + 1)
        for side, tick, vol in levels:
            k = tick - mid_tick
            if -max_ticks <= k <= max_ticks:
                profile[k + max_ticks] += vol if side == "buy" else -vol
        profiles.append(profile)
    return profiles


def book_shape_average(profiles) -> np.ndarray:
    arr = np.asarray(list(profiles), dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise EstimationError("book_shape_average needs at least one profile")
    return arr.mean(axis=0)


# -- scikit-learn style wrappers --------------------------------------------

class HillEstimator(BaseEstimator):
    """Hill tail-index estimator.

    Parameters
    ----------
    tail_fraction : float, default=0.05
        Share of the selected tail used as order statistics.
    side : {"abs", "right", "left"}, default="abs"

    Attributes
    ----------
    gamma_, beta_, k_, stderr_gamma_ : fitted inverse index, index, tail count
        and asymptotic standard error of ``gamma_``.
    """

    def __init__(self, tail_fraction: float = 0.05, side: str = "abs"):
        self.tail_fraction = tail_fraction
        self.side = side

    def fit(self, X, y=None):
        est = hill(X, self.tail_fraction, self.side)
        self.estimate_ = est
        self.gamma_ = est.gamma_hat
        self.beta_ = est.beta_hat
        self.k_ = est.k
        self.stderr_gamma_ = est.stderr_gamma
        return self

    def score(self, X, y=None) -> float:
        check_is_fitted(self, "beta_")
        return self.beta_


class ModifiedRescaledRange(BaseEstimator):
    def __init__(self, window: int = 100, q: int = 20):
        self.window = window
        self.q = q

    def fit(self, X, y=None):
        est = modified_rs(X, self.window, self.q)
        self.estimate_ = est
        self.beta_n_ = est.beta_n
        self.Q_n_ = est.Q_n
        self.n_windows_ = est.windows
        return self


class VolatilityAutocorrelation(BaseEstimator):
    """Autocorrelation of |x| (or of x itself with ``absolute=False``)."""

    def __init__(self, max_lag: int = 20, absolute: bool = True):
        self.max_lag = max_lag
        self.absolute = absolute

    def fit(self, X, y=None):
        x = _as_vector(X)
        self.acf_ = autocorrelation(np.abs(x) if self.absolute else x, self.max_lag)
        return self

    def transform(self, X):
        return self.fit(X).acf_
