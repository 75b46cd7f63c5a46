"""Order-statistic CDFs for the number of buyers who accept a price.

``D_j(p)`` is the probability that fewer than ``j`` buyers have a value of at
least ``p``.  It is computed exactly from the Poisson-binomial count
distribution, and approximately from the first-order statistic alone:
``D_1 * sum_{t<j} (-ln D_1)^t / t!``, the Poisson CDF with rate ``-ln D_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .dists import Market

__all__ = [
    "OrderStatProfile",
    "exact_order_stat_cdf",
    "count_pmf_head",
    "order_stat_cdfs",
    "approx_order_stat_cdf",
    "approx_order_stat_cdf_from_rate",
    "verify_sandwich",
    "order_profile",
]

# Floating-point slack used when checking the sandwich bounds.
_ROUNDING = 1e-12


def _check_probs(probs) -> np.ndarray:
    a = np.asarray(probs, dtype=float).ravel()
    if np.any(~np.isfinite(a)) or np.any(a < 0) or np.any(a > 1):
        raise ValueError("accept probabilities must lie in [0, 1]")
    return a


def exact_order_stat_cdf(accept_probs: Sequence[float], j: int) -> float:
    """``Pr[at most j-1 of the independent indicators fire]``, in O(n*j)."""
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    a = _check_probs(accept_probs)
    state = np.zeros(j)
    state[0] = 1.0
    for p in a:
        nxt = state * (1.0 - p)
        nxt[1:] += state[:-1] * p
        state = nxt
    return float(state.sum())


def _binomial_heads(probs: np.ndarray, counts: np.ndarray, cap: int) -> np.ndarray:
    """``Pr[Bin(c, a) = m]`` for ``m < cap``, one row per (a, c) pair.

    Falling factorials are summed term by term, so counts far beyond 2**53
    keep their relative precision.
    """
    m = np.arange(cap)
    with np.errstate(divide="ignore", invalid="ignore"):
        steps = np.log(counts[:, None] - np.arange(max(cap - 1, 0))[None, :])
        steps = np.where(counts[:, None] - np.arange(max(cap - 1, 0))[None, :] > 0, steps, -np.inf)
        logfall = np.concatenate([np.zeros((len(counts), 1)), np.cumsum(steps, axis=1)], axis=1)
        logpmf = (logfall - gammaln(m + 1)[None, :]
                  + m[None, :] * np.log(probs)[:, None]
                  + (counts[:, None] - m[None, :]) * np.log1p(-probs)[:, None])
    return np.where(np.isfinite(logpmf), np.exp(logpmf), 0.0)


def _truncated_product(heads: np.ndarray, cap: int) -> np.ndarray:
    """Multiply count-distribution heads as polynomials truncated at ``cap``."""
    while len(heads) > 1:
        if len(heads) % 2:
            one = np.zeros((1, cap))
            one[0, 0] = 1.0
            heads = np.vstack([heads, one])
        a, b = heads[0::2], heads[1::2]
        out = np.zeros_like(a)
        for i in range(cap):
            out[:, i:] += a[:, i:i + 1] * b[:, : cap - i]
        heads = out
    return heads[0]


def count_pmf_head(accept_probs, counts, cap: int) -> np.ndarray:
    """``Pr[N = m]`` for ``m = 0 .. cap-1`` where ``N`` counts acceptances.

    Agent type ``i`` contributes ``Binomial(counts[i], accept_probs[i])``.
    Mass at ``N >= cap`` is implied by ``1 - head.sum()``.
    """
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    a = _check_probs(accept_probs)
    c = np.asarray(counts, dtype=float).ravel()
    if c.shape != a.shape:
        raise ValueError("accept_probs and counts must have the same length")
    sure = float(c[a == 1.0].sum())
    if sure >= cap:
        return np.zeros(cap)
    live = (a > 0) & (a < 1)
    head = np.zeros(cap)
    head[0] = 1.0
    if live.any():
        head = _truncated_product(_binomial_heads(a[live], c[live], cap), cap)
    shift = int(sure)
    if shift:
        head = np.concatenate([np.zeros(shift), head[: cap - shift]])
    return head


def order_stat_cdfs(accept_probs, counts, k: int) -> np.ndarray:
    """Exact ``(D_1, ..., D_k)`` for a multiplicity-weighted market."""
    return np.minimum(np.cumsum(count_pmf_head(accept_probs, counts, k)), 1.0)


def approx_order_stat_cdf(first_order: float, j: int) -> float:
    """Approximate ``D_j`` from ``D_1``; zero when ``D_1`` is zero."""
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    if not 0.0 <= first_order <= 1.0:
        raise ValueError(f"first_order must lie in [0, 1], got {first_order}")
    if first_order == 0.0:
        return 0.0
    lam = -math.log(first_order)
    term = total = 1.0
    for t in range(1, j):
        term *= lam / t
        total += term
    return min(1.0, first_order * total)


def approx_order_stat_cdf_from_rate(rate: float, j: int) -> float:
    """Same as :func:`approx_order_stat_cdf` with ``rate = -ln D_1`` given.

    Stays accurate when ``D_1 = exp(-rate)`` underflows.
    """
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    if rate < 0:
        raise ValueError(f"rate must be nonnegative, got {rate}")
    if math.isinf(rate):
        return 0.0
    if rate == 0.0:
        return 1.0
    t = np.arange(j)
    return min(1.0, math.exp(-rate + logsumexp(t * math.log(rate) - gammaln(t + 1))))


def _rate(accept_probs: np.ndarray, counts: np.ndarray | None = None) -> float:
    """``-ln D_1 = sum_i -ln(1 - a_i)``."""
    if np.any(accept_probs == 1.0):
        return math.inf
    terms = -np.log1p(-accept_probs)
    if counts is not None:
        terms = terms * counts
    return float(terms.sum())


def verify_sandwich(accept_probs: Sequence[float], j: int, delta: float) -> bool:
    """Check ``(1 - delta*j) Dhat_j <= D_j <= (1 + 2*delta*j) Dhat_j``.

    Preconditions (``delta <= 1/(4j)`` and every accept probability at most
    ``delta``) raise ``ValueError`` when violated.
    """
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    if not 0 < delta <= 1.0 / (4 * j):
        raise ValueError(f"delta must lie in (0, 1/(4j)] = (0, {1 / (4 * j)}], got {delta}")
    a = _check_probs(accept_probs)
    if np.any(a > delta):
        raise ValueError(f"accept probability {a.max()} exceeds delta={delta}")
    exact = exact_order_stat_cdf(a, j)
    approx = approx_order_stat_cdf_from_rate(_rate(a), j)
    lo = (1.0 - delta * j) * approx * (1.0 - _ROUNDING)
    hi = (1.0 + 2.0 * delta * j) * approx * (1.0 + _ROUNDING)
    return bool(lo <= exact <= hi)


@dataclass(frozen=True)
class OrderStatProfile:
    """Exact and approximate ``(D_1(p), ..., D_k(p))`` at one price.

    ``delta`` is the largest single acceptance probability, so every buyer
    has ``F_i(p) >= 1 - delta``; ``lower``/``upper`` are the sandwich bounds
    around the approximation (meaningful when ``delta <= 1/(4j)``).
    """

    price: float
    exact: tuple[float, ...]
    approx: tuple[float, ...]
    first_order: float
    delta: float

    @property
    def lower(self) -> tuple[float, ...]:
        return tuple((1 - self.delta * j) * d for j, d in enumerate(self.approx, start=1))

    @property
    def upper(self) -> tuple[float, ...]:
        return tuple((1 + 2 * self.delta * j) * d for j, d in enumerate(self.approx, start=1))


def order_profile(market: Market, p: float, exact: bool = True) -> OrderStatProfile:
    a = market.accept_probs(p)
    counts = market.counts
    k = market.supply
    rate = _rate(a, counts)
    approx = tuple(approx_order_stat_cdf_from_rate(rate, j) for j in range(1, k + 1))
    exact_list = tuple(float(x) for x in order_stat_cdfs(a, counts, k)) if exact else ()
    return OrderStatProfile(price=float(p), exact=exact_list, approx=approx,
                            first_order=approx[0], delta=float(a.max()))
