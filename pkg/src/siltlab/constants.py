"""Analytic constants for the renormalized self-intersection functional.

Provides the Gaussian product moments, the combinatorial coefficient ``beta``
(a sum over constrained compositions of m into d parts), the Gamma-factor
``phi`` from the time-integral asymptotics, the per-chaos limiting variances
``sigma^2 = beta * phi`` and their convergent total for d >= 3, the
closed-form mean of the mollified functional, the asymptotic regime
classification in (d, |k|), and the renormalizing factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import zeta

from .kernel import MultiIndex, as_orders

__all__ = [
    "InadmissibleRegimeError",
    "SeriesDivergenceError",
    "Regime",
    "classify_regime",
    "ChaosTerm",
    "gaussian_product_moment",
    "beta",
    "beta_sequence",
    "phi",
    "sigma_sq_term",
    "sigma_total",
    "sigma_series_partial",
    "expected_alpha",
    "renormalizer",
    "min_chaos_index",
]

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_2 = math.log(2.0)


class InadmissibleRegimeError(ValueError):
    """The pair (d, |k|) lies outside every asymptotic regime."""


class SeriesDivergenceError(ValueError):
    """The total-variance series diverges for this (d, |k|)."""


class Regime(Enum):
    # d=1, |k|=2: second moment grows like log(1/eps); normalized by
    # (log 1/eps)^gamma it tends to infinity for gamma <= 1 and 0 for
    # gamma > 1, so no finite nonzero total limit exists.
    LOG_DIVERGENT = "log-divergent"
    # d=2, |k|=1: second moment ~ (log 1/eps)^2 / (4 pi^2).
    LOG_SQUARED = "log-squared"
    # d <= 2 with d+|k| >= 4: power growth, total-variance series diverges.
    POWER_DIVERGENT = "power-divergent"
    # d >= 3: eps^(d+|k|-3) times the second moment converges to sum sigma^2.
    POWER_CONVERGENT = "power-convergent"


def classify_regime(d: int, abs_k: int) -> Regime:
    """Total classification of admissible (d, |k|) pairs."""
    if d < 1 or abs_k < 1:
        raise InadmissibleRegimeError(f"(d={d}, |k|={abs_k}): need d >= 1 and |k| >= 1")
    if d == 1 and abs_k == 1:
        raise InadmissibleRegimeError(
            "(d=1, |k|=1): the functional needs no renormalization; outside every regime"
        )
    if d == 1 and abs_k == 2:
        return Regime.LOG_DIVERGENT
    if d == 2 and abs_k == 1:
        return Regime.LOG_SQUARED
    if d <= 2:
        # remaining pairs all satisfy d + |k| >= 4
        return Regime.POWER_DIVERGENT
    return Regime.POWER_CONVERGENT


def min_chaos_index(abs_k: int) -> int:
    """Smallest m with 2m > |k|."""
    return abs_k // 2 + 1


def gaussian_product_moment(parts) -> float:
    """E[xi_1^(2*m_1) ... xi_d^(2*m_d)] for iid standard normals.

    Equals prod (2*m_j)! / (prod m_j! * 2**m) with m = sum m_j, an integer
    (the product of double factorials (2*m_j - 1)!!).  Computed exactly.
    """
    parts = [int(p) for p in parts]
    if any(p < 0 for p in parts):
        raise ValueError("parts must be non-negative")
    out = 1
    for p in parts:
        for odd in range(2 * p - 1, 1, -2):
            out *= odd
    return float(out)


def _compositions(m: int, lows: tuple[int, ...]):
    """Compositions (m_1, ..., m_d) of m with m_j >= lows[j], lexicographic."""
    d = len(lows)
    tail_min = [0] * (d + 1)
    for j in range(d - 1, -1, -1):
        tail_min[j] = tail_min[j + 1] + lows[j]

    def rec(j: int, remaining: int, prefix: tuple[int, ...]):
        if j == d - 1:
            if remaining >= lows[j]:
                yield prefix + (remaining,)
            return
        for mj in range(lows[j], remaining - tail_min[j + 1] + 1):
            yield from rec(j + 1, remaining - mj, prefix + (mj,))

    if m >= tail_min[0]:
        yield from rec(0, m, ())


def _log_beta_term(parts, orders) -> float:
    # log of ((2m_1)!...(2m_d)!)^2 / ((2pi)^d 2^(2m) prod(2m_j-k_j)! prod(m_j!)^2)
    m = sum(parts)
    d = len(orders)
    s = -d * _LOG_2PI - 2 * m * _LOG_2
    for mj, kj in zip(parts, orders):
        s += 2.0 * math.lgamma(2 * mj + 1)
        s -= math.lgamma(2 * mj - kj + 1)
        s -= 2.0 * math.lgamma(mj + 1)
    return s


@lru_cache(maxsize=4096)
def _beta_cached(m: int, orders: tuple[int, ...]) -> float:
    lows = tuple((kj + 1) // 2 for kj in orders)  # 2*m_j >= k_j
    total = 0.0
    for parts in _compositions(m, lows):
        total += math.exp(_log_beta_term(parts, orders))
    return total


def beta(m: int, k) -> float:
    """Chaos coefficient beta_{2m-|k|,d}: composition sum of Gaussian moments.

    Terms are accumulated in log space; naive factorial products overflow
    near m ~ 15.
    """
    orders = as_orders(k)
    abs_k = sum(orders)
    if 2 * m <= abs_k:
        raise ValueError(f"need 2m > |k| (got m={m}, |k|={abs_k})")
    return _beta_cached(int(m), orders)


def beta_sequence(k, m_max: int) -> np.ndarray:
    """beta values for every m in [min_chaos_index(|k|), m_max] at once.

    The composition sum factorizes coordinate-wise, so the whole sequence is a
    (d-1)-fold discrete convolution of per-coordinate weight sequences
    g_k(n) = ((2n)!)^2 / ((2n-k)! (n!)^2 4^n), which grow only polynomially.
    Entry [m] of the returned array (length m_max+1) holds beta for that m;
    entries below the first admissible m are 0.
    """
    orders = as_orders(k)
    d = len(orders)
    m_max = int(m_max)

    def coord_seq(kj: int) -> np.ndarray:
        g = np.zeros(m_max + 1)
        n0 = (kj + 1) // 2
        n = np.arange(n0, m_max + 1)
        if n.size:
            lg = (
                2.0 * _lgamma_arr(2 * n + 1)
                - _lgamma_arr(2 * n - kj + 1)
                - 2.0 * _lgamma_arr(n + 1)
                - 2.0 * n * _LOG_2
            )
            g[n0:] = np.exp(lg)
        return g

    acc = coord_seq(orders[0])
    for kj in orders[1:]:
        acc = np.convolve(acc, coord_seq(kj))[: m_max + 1]
    return acc * (2.0 * math.pi) ** (-d)


def _lgamma_arr(x) -> np.ndarray:
    from scipy.special import gammaln

    return gammaln(np.asarray(x, dtype=float))


def phi(m: int, d: int, abs_k: int) -> float:
    """Gamma-factor of the per-chaos limiting variance.

    phi = 2 G(2m-|k|+1) G(d+|k|-3) / (G(2m+d-2) (m+d/2-1))
          * (1/(m+d/2-1) + 1/(m+d/2-2)),
    computed through log-Gamma.  Requires d+|k| >= 4 (Gamma pole at
    d+|k| = 3), 2m > |k|, and m + d/2 - 2 > 0.
    """
    if d + abs_k < 4:
        raise ValueError(f"phi undefined for d+|k| = {d + abs_k} < 4 (Gamma pole)")
    if 2 * m <= abs_k:
        raise ValueError(f"need 2m > |k| (got m={m}, |k|={abs_k})")
    a = m + d / 2.0 - 1.0
    b = m + d / 2.0 - 2.0
    if b <= 0:
        raise ValueError(f"need m + d/2 - 2 > 0 (got {b})")
    lg = math.lgamma(2 * m - abs_k + 1) + math.lgamma(d + abs_k - 3) - math.lgamma(2 * m + d - 2)
    return 2.0 * math.exp(lg) / a * (1.0 / a + 1.0 / b)


@dataclass(frozen=True)
class ChaosTerm:
    """Per-m analytic record: sigma_sq = beta * phi."""

    m: int
    beta: float
    phi: float
    sigma_sq: float


def sigma_sq_term(m: int, d: int, k) -> ChaosTerm:
    """Limiting variance of the m-th chaotic component (power regimes)."""
    orders = as_orders(k)
    if len(orders) != d:
        raise ValueError(f"multi-index dimension {len(orders)} != d={d}")
    abs_k = sum(orders)
    b = beta(m, orders)
    p = phi(m, d, abs_k)
    return ChaosTerm(m=m, beta=b, phi=p, sigma_sq=b * p)


def sigma_series_partial(d: int, k, m_max: int) -> np.ndarray:
    """Partial sums of the sigma^2 series up to each m <= m_max.

    Entry [M] is sum_{m_min <= m <= M} beta_m * phi(m).  Used to exhibit the
    divergence for d <= 2 and as raw material for tail estimates.
    """
    orders = as_orders(k)
    abs_k = sum(orders)
    m_min = min_chaos_index(abs_k)
    betas = beta_sequence(orders, m_max)
    terms = np.zeros(m_max + 1)
    for m in range(m_min, m_max + 1):
        terms[m] = betas[m] * phi(m, d, abs_k)
    return np.cumsum(terms)


@dataclass(frozen=True)
class SeriesResult:
    value: float
    terms_used: int
    tail_estimate: float  # residual uncertainty after the tail correction
    partial_sum: float
    tail_correction: float


def sigma_total_detail(d: int, k, rel_tol: float = 1e-6, max_terms: int = 1 << 15) -> SeriesResult:
    """Convergent total sum_m sigma^2 for d >= 3, with tail acceleration.

    Terms decay like m**(-d/2); a raw partial sum reaching rel_tol would need
    astronomically many terms, so the tail is completed with the calibrated
    model c * m**(-d/2) summed exactly by the Hurwitz zeta function, with c
    fitted to the last computed term.  Iteration doubles the truncation point
    until the corrected value is self-consistent to rel_tol.
    """
    orders = as_orders(k)
    if len(orders) != d:
        raise ValueError(f"multi-index dimension {len(orders)} != d={d}")
    abs_k = sum(orders)
    regime = classify_regime(d, abs_k)
    if regime is not Regime.POWER_CONVERGENT:
        raise SeriesDivergenceError(
            f"total-variance series diverges for (d={d}, |k|={abs_k}) [{regime.value}]"
        )
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")

    m_min = min_chaos_index(abs_k)
    s = d / 2.0
    M = max(128, 8 * m_min)
    prev_value = None
    while True:
        partial = sigma_series_partial(d, orders, M)
        # two-term tail model c*m**-s + c2*m**-(s+1), calibrated at M/2 and M
        m_lo = M // 2
        t_hi = partial[M] - partial[M - 1]
        t_lo = partial[m_lo] - partial[m_lo - 1]
        a = np.array([[M**-s, M ** -(s + 1.0)], [m_lo**-s, m_lo ** -(s + 1.0)]])
        c, c2 = np.linalg.solve(a, np.array([t_hi, t_lo]))
        tail = c * float(zeta(s, M + 1)) + c2 * float(zeta(s + 1.0, M + 1))
        value = float(partial[M] + tail)
        if prev_value is not None:
            gap = abs(value - prev_value)
            if gap <= rel_tol * abs(value):
                return SeriesResult(
                    value=value,
                    terms_used=M,
                    tail_estimate=gap,
                    partial_sum=float(partial[M]),
                    tail_correction=float(tail),
                )
        prev_value = value
        M *= 2
        if M > max_terms:
            raise RuntimeError(f"sigma_total did not stabilize within {max_terms} terms")


def sigma_total(d: int, k, rel_tol: float = 1e-6) -> tuple[float, int]:
    """Total limiting variance sum_{2m > |k|} beta_m * phi(m) for d >= 3."""
    res = sigma_total_detail(d, k, rel_tol)
    return res.value, res.terms_used


def expected_alpha(eps: float, d: int, k) -> float:
    """Closed-form mean of the mollified functional.

    Zero whenever any k_j is odd.  Otherwise C_k * J where
    C_k = prod (-1)**(k_j/2) (k_j-1)!! (2 pi)**(-1/2) and
    J = int_0^1 (1-u) (u+eps)**(-q) du with q = (|k|+d)/2; the q in {1, 2}
    cases use the logarithmic antiderivatives explicitly.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    orders = as_orders(k)
    if len(orders) != d:
        raise ValueError(f"multi-index dimension {len(orders)} != d={d}")
    if any(kj % 2 for kj in orders):
        return 0.0
    c = 1.0
    for kj in orders:
        dbl = 1
        for odd in range(kj - 1, 1, -2):
            dbl *= odd
        c *= (-1.0) ** (kj // 2) * dbl / math.sqrt(2.0 * math.pi)
    q = (sum(orders) + d) / 2.0
    e1 = 1.0 + eps
    if q == 1.0:
        j = e1 * math.log(e1 / eps) - 1.0
    elif q == 2.0:
        j = 1.0 / eps - math.log(e1 / eps)
    else:
        j = e1 * (e1 ** (1.0 - q) - eps ** (1.0 - q)) / (1.0 - q)
        j -= (e1 ** (2.0 - q) - eps ** (2.0 - q)) / (2.0 - q)
    return c * j


def renormalizer(scope: str, d: int, k, eps: float, m: int | None = None) -> float:
    """Scalar factor bringing the raw statistic to its nontrivial limit.

    ``scope`` is "per-chaos" (requires m) or "total".  Per chaos:
    (log 1/eps)^(-1/2) for (d=1, |k|=2, m>=2) and (d=2, |k|=1, m>=2),
    (log 1/eps)^(-1) for (d=2, |k|=1, m=1), eps^((d+|k|-3)/2) when
    d+|k| >= 4.  Totals exist only for (d=2, |k|=1) [(log 1/eps)^(-1)] and
    d >= 3 [eps^((d+|k|-3)/2)].
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("need 0 < eps < 1")
    orders = as_orders(k)
    if len(orders) != d:
        raise ValueError(f"multi-index dimension {len(orders)} != d={d}")
    abs_k = sum(orders)
    regime = classify_regime(d, abs_k)
    log_term = math.log(1.0 / eps)

    if scope == "per-chaos":
        if m is None:
            raise ValueError("per-chaos scope requires m")
        if 2 * m <= abs_k:
            raise InadmissibleRegimeError(f"need 2m > |k| (got m={m}, |k|={abs_k})")
        if regime is Regime.LOG_DIVERGENT:  # d=1, |k|=2, m>=2
            return log_term ** (-0.5)
        if regime is Regime.LOG_SQUARED:  # d=2, |k|=1
            return log_term ** (-1.0) if m == 1 else log_term ** (-0.5)
        return eps ** ((d + abs_k - 3) / 2.0)

    if scope == "total":
        if regime is Regime.LOG_SQUARED:
            return log_term ** (-1.0)
        if regime is Regime.POWER_CONVERGENT:
            return eps ** ((d + abs_k - 3) / 2.0)
        raise InadmissibleRegimeError(
            f"no finite nonzero total limit exists for (d={d}, |k|={abs_k}) [{regime.value}]"
        )

    raise ValueError(f"unknown scope {scope!r}")
