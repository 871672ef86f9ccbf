"""Estimator self-checks on synthetic data with known answers."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .agents import demand, min_price, satisfaction_price
from .stats import autocorrelation, hill, modified_rs, rs_statistic


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def classical_rs(window) -> float:
    """Plain R/S: range of demeaned partial sums over the population std."""
    x = [float(v) for v in window]
    n = len(x)
    mean = sum(x) / n
    acc, lo, hi = 0.0, 0.0, 0.0
    for v in x:
        acc += v - mean
        lo, hi = min(lo, acc), max(hi, acc)
    sd = math.sqrt(sum((v - mean) ** 2 for v in x) / n)
    return (hi - lo) / sd


def check_hill_pareto(seed: int = 1, n: int = 100_000, beta: float = 3.0) -> Check:
    rng = np.random.default_rng(seed)
    x = rng.random(n) ** (-1.0 / beta)
    est = hill(x, 0.05)
    ok = abs(est.beta_hat - beta) <= 3 * est.stderr_beta
    return Check("hill_pareto3", ok, f"beta_hat={est.beta_hat:.4f} stderr={est.stderr_beta:.4f} k={est.k}")


def check_acf(seed: int = 2, n: int = 100_000, max_lag: int = 20) -> Check:
    rng = np.random.default_rng(seed)
    c = autocorrelation(rng.standard_normal(n), max_lag)
    band = 4 / math.sqrt(n)
    outside = int(np.sum(np.abs(c[1:]) > band))
    ok = c[0] == 1.0 and outside <= 1
    return Check("acf_white_noise", ok, f"C0={float(c[0]):.17g} outside_band={outside}/{max_lag} band={band:.4g}")


def check_rs_q0(seed: int = 3, windows: int = 50) -> Check:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(windows):
        w = rng.standard_normal(int(rng.integers(20, 400))) * rng.uniform(0.1, 10)
        a, b = rs_statistic(w, 0), classical_rs(w)
        worst = max(worst, abs(a - b) / abs(b))
    return Check("rs_q0_classical", worst <= 1e-12, f"max relative difference {worst:.3g}")


def check_rs_iid(seed: int = 4, n: int = 512, q: int = 20, windows: int = 200) -> Check:
    rng = np.random.default_rng(seed)
    est = modified_rs(rng.standard_normal(n * windows), n, q)
    ok = 0.4 <= est.beta_n <= 0.6 and est.windows >= 100
    return Check("rs_iid_gaussian", ok, f"beta_n={est.beta_n:.4f} over {est.windows} windows (n={n}, q={q})")


def check_roots(seed: int = 5, cases: int = 2000) -> Check:
    rng = np.random.default_rng(seed)
    worst_star = 0.0
    worst_pm = 0.0
    for _ in range(cases):
        # alpha * var * p_hat >= 1e-7: below ~1e-8 one ulp of p already moves
        # the demand by more than the tolerance
        p_hat = float(np.exp(rng.uniform(math.log(10.0), math.log(1e4))))
        alpha = float(np.exp(rng.uniform(math.log(1e-2), math.log(10.0))))
        var = float(np.exp(rng.uniform(math.log(1e-6), math.log(1e-2))))
        s = float(rng.choice([0.0, rng.uniform(0, 1e-3), rng.uniform(0, 100), rng.uniform(0, 1e4)]))
        p_star = satisfaction_price(p_hat, alpha, var, s)
        worst_star = max(worst_star, abs(demand(p_star, p_hat, alpha, var) - s) / max(s, 1.0))
        c = float(rng.uniform(0, min(1e5, 50.0 / (alpha * var))))  # keep p_m representable
        p_m = min_price(p_hat, alpha, var, 0.0, c)
        # with S = 0 the log-discount is exactly alpha*var*C; compare in log space
        x_exact = alpha * var * c
        worst_pm = max(worst_pm, abs(math.log(p_hat / p_m) - x_exact) / max(x_exact, 1e-3))
    ok = worst_star <= 1e-8 and worst_pm <= 1e-9
    return Check(
        "root_finders", ok,
        f"max |pi(p*)-S|/max(S,1)={worst_star:.3g}; max log-discount error p_m(S=0)={worst_pm:.3g}",
    )


CHECKS: List[Callable[[], Check]] = [check_hill_pareto, check_acf, check_rs_q0, check_rs_iid, check_roots]


def run_all() -> List[Check]:
    out = []
    for fn in CHECKS:
        t0 = time.perf_counter()
        c = fn()
        out.append(Check(c.name, c.passed, c.detail, time.perf_counter() - t0))
    return out
