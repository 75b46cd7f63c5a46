"""Revenue of pricing mechanisms on triangular markets.

Every evaluator works on (agent type, count) pairs and never materialises
individual buyers, so markets with 10**12 identical agents are cheap.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dists import Market, TriangularAgent, epsilon_of_market
from .orderstats import count_pmf_head

__all__ = [
    "RevenueReport",
    "GapReport",
    "ap_revenue_analytic",
    "expected_sales",
    "ap_revenue_mc",
    "ap_optimal",
    "spp_revenue",
    "opt_revenue_triangular",
    "ear",
    "example1_market",
    "lower_bound_instance",
    "gap_report",
    "MAX_COUNT",
]

log = logging.getLogger(__name__)

# Upper limit on agent multiplicity in generated instances.
MAX_COUNT = 10**12

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
# Relative slack when discarding a price bracket that cannot beat the incumbent.
_PRUNE_RTOL = 1e-12


@dataclass(frozen=True)
class RevenueReport:
    mechanism: str
    revenue: float
    price: float | tuple[float, ...]
    stderr: float = 0.0
    trials: int = 0
    seed: int | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(self.price, tuple):
            d["price"] = list(self.price)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RevenueReport":
        price = d["price"]
        if isinstance(price, list):
            price = tuple(float(x) for x in price)
        return cls(d["mechanism"], float(d["revenue"]), price, float(d.get("stderr", 0.0)),
                   int(d.get("trials", 0)), d.get("seed"))


@dataclass(frozen=True)
class GapReport:
    market_id: str
    k: int
    opt: float
    ap: float
    ear: float
    ratio: float
    epsilon: float
    ap_price: float = field(default=math.nan)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GapReport":
        return cls(str(d["market_id"]), int(d["k"]), float(d["opt"]), float(d["ap"]),
                   float(d["ear"]), float(d["ratio"]), float(d["epsilon"]),
                   float(d.get("ap_price", math.nan)))


def expected_sales(market: Market, p: float, strict: bool = False) -> float:
    """``E[min(k, N(p))]`` with ``N(p)`` the number of buyers accepting ``p``."""
    k = market.supply
    head = count_pmf_head(market.accept_probs(p, strict=strict), market.counts, k)
    return float(k - np.dot(k - np.arange(k), head))


def ap_revenue_analytic(market: Market, p: float) -> float:
    """``p * sum_j (1 - D_j(p))``."""
    if math.isinf(p):
        return _revenue_at_infinity(market)
    head = count_pmf_head(market.accept_probs(p), market.counts, market.supply)
    d = np.minimum(np.cumsum(head), 1.0)
    return float(p * np.sum(1.0 - d))


def _revenue_at_infinity(market: Market) -> float:
    # p * r/(r + p) -> r for zero-quantile buyers, and no unit is ever used up.
    return float(sum(a.monopoly_revenue * a.count for a in market.agents
                     if a.monopoly_quantile == 0.0))


def _sample_sales(rng: np.random.Generator, probs, counts, k: int, n: int) -> np.ndarray:
    live = (probs > 0) & (probs < 1)
    sure = int(counts[probs == 1.0].sum())
    total = np.full(n, sure, dtype=np.int64)
    if live.any():
        draws = rng.binomial(counts[live].astype(np.int64), probs[live], size=(n, int(live.sum())))
        total += draws.sum(axis=1)
    return np.minimum(total, k)


def ap_revenue_mc(market: Market, p: float, trials: int, seed: int,
                  shards: int = 1, chunk: int = 1 << 16) -> RevenueReport:
    """Monte Carlo estimate of ``AP(p)``; bit-reproducible for ``(seed, shards)``.

    Shard ``s`` draws from ``SeedSequence([seed, s])``; shard means and
    variances are pooled in shard order.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if shards < 1:
        raise ValueError(f"shards must be >= 1, got {shards}")
    probs, counts, k = market.accept_probs(p), market.counts, market.supply
    sizes = [trials // shards + (1 if s < trials % shards else 0) for s in range(shards)]
    total = total_sq = 0.0
    for s, size in enumerate(sizes):
        rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), s]))
        done = 0
        while done < size:
            n = min(chunk, size - done)
            sales = _sample_sales(rng, probs, counts, k, n).astype(float)
            total += sales.sum()
            total_sq += (sales * sales).sum()
            done += n
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0)
    stderr = p * math.sqrt(var / max(trials - 1, 1)) if trials > 1 else 0.0
    return RevenueReport("AP", p * mean, float(p), stderr, int(trials), int(seed))


def _golden_max(f, lo: float, hi: float, rtol: float = 1e-10, max_iter: int = 100):
    """Golden-section search for a maximum of ``f`` on ``[lo, hi]``."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= rtol * max(abs(a), abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def ap_optimal(market: Market) -> RevenueReport:
    """Best anonymous price.

    Every monopoly value is a candidate; the open bracket between
    consecutive candidates is refined by golden-section search unless an
    upper bound (right endpoint times the expected sales just above the
    left endpoint) shows it cannot beat the incumbent.  Ties go to the
    lowest price.
    """
    values = market.monopoly_values
    cands = np.unique(values[np.isfinite(values)])
    best_p, best = math.nan, -math.inf

    def consider(p, rev):
        nonlocal best_p, best
        if rev > best or (rev == best and p < best_p):
            best_p, best = p, rev

    revs = [ap_revenue_analytic(market, float(p)) for p in cands]
    for p, rev in zip(cands, revs):
        consider(float(p), rev)
    if np.any(~np.isfinite(values)):
        consider(math.inf, _revenue_at_infinity(market))

    f = lambda p: ap_revenue_analytic(market, p)
    brackets = []
    if len(cands):
        brackets.append((cands[0] * 1e-6, float(cands[0])))
        brackets.extend(zip(cands[:-1].tolist(), cands[1:].tolist()))
        if np.any(~np.isfinite(values)):
            brackets.append((float(cands[-1]), float(cands[-1]) * 1e6))
    else:
        # only zero-quantile buyers: revenue increases toward the limit
        return RevenueReport("AP", best, best_p)
    for lo, hi in brackets:
        bound = hi * expected_sales(market, lo, strict=True)
        if bound <= best * (1.0 + _PRUNE_RTOL):
            continue
        p, rev = _golden_max(f, lo, hi)
        consider(p, rev)
    return RevenueReport("AP", float(best), float(best_p))


def spp_revenue(market: Market, prices: Sequence[float]) -> float:
    """Expected revenue of sequential posted prices, one price per agent type.

    Types are visited in decreasing price order (input order on ties).  The
    distribution of units sold so far is carried along; a type with ``c``
    copies sells ``E[min(units left, Bin(c, a))]`` units.
    """
    prices = [float(p) for p in prices]
    if len(prices) != len(market.agents):
        raise ValueError("need exactly one price per agent type")
    if any(not p > 0 for p in prices):
        raise ValueError("prices must be positive")
    k = market.supply
    order = sorted(range(len(prices)), key=lambda i: -prices[i])
    sold = np.zeros(k + 1)  # sold[s] = Pr[s units sold], s = 0..k
    sold[0] = 1.0
    revenue = 0.0
    for i in order:
        agent, p = market.agents[i], prices[i]
        if math.isinf(p):
            if agent.monopoly_quantile == 0.0:
                revenue += agent.monopoly_revenue * agent.count * (1.0 - sold[k])
            continue
        a = agent.accept_prob(p)
        if a == 0.0:
            continue
        head = count_pmf_head([a], [agent.count], k)
        # E[min(r, B)] for r = 0..k
        kernel = np.concatenate([[0.0], np.cumsum(1.0 - np.cumsum(head))])
        left = k - np.arange(k + 1)
        revenue += p * float(np.dot(sold, kernel[left]))
        live = np.convolve(sold[:k], head)[:k]
        nxt = np.zeros(k + 1)
        nxt[:k] = live
        nxt[k] = max(0.0, 1.0 - live.sum())
        sold = nxt
    return float(revenue)


def opt_revenue_triangular(market: Market) -> RevenueReport:
    """Optimal revenue: posted prices at each agent's monopoly value."""
    for a in market.agents:
        if not isinstance(a, TriangularAgent):
            raise TypeError("opt_revenue_triangular needs triangular agents")
    prices = tuple(float(v) for v in market.monopoly_values)
    return RevenueReport("OPT", spp_revenue(market, prices), prices)


def ear(market: Market) -> float:
    """Ex-ante relaxation: fractional greedy by monopoly value under ``sum q <= k``."""
    k = float(market.supply)
    used = total = 0.0
    agents = sorted(market.agents, key=lambda a: -a.monopoly_value)
    for a in agents:
        q, r = a.monopoly_quantile * a.count, a.monopoly_revenue * a.count
        if used + q <= k:
            used += q
            total += r
        else:
            total += (k - used) * a.monopoly_value
            break
    return total


def example1_market(k: int) -> Market:
    """``k`` buyers, buyer ``i`` with deterministic value ``1/i``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return Market(k, tuple(TriangularAgent(1.0 / i, 1.0) for i in range(1, k + 1)))


def lower_bound_instance(k: int, delta: float, max_count: int = MAX_COUNT) -> Market:
    """Two-group market whose OPT/AP gap tends to 2 as ``delta -> 0``.

    Group 1: ``round(1/delta)`` buyers ``Tri(delta, delta**2)`` (value
    ``1/delta``, about ``delta`` expected acceptances).  Group 2:
    ``delta**-10`` buyers ``Tri(delta/k, delta)`` (value ``1/k``), capped
    at ``max_count``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    n1 = int(round(1.0 / delta))
    n2_exact = delta ** -10
    n2 = int(round(min(n2_exact, max_count)))
    if n2_exact > max_count:
        log.warning("group-2 count %.3g capped at %d", n2_exact, max_count)
    if n1 < 1 or n2 < 1:
        raise ValueError("delta too large: group sizes round to zero")
    return Market(k, (TriangularAgent(delta, delta**2, n1),
                      TriangularAgent(delta / k, delta, n2)))


def gap_report(market: Market, market_id: str = "") -> GapReport:
    opt = opt_revenue_triangular(market).revenue
    ap = ap_optimal(market)
    if not ap.revenue > 0:
        raise ValueError("anonymous pricing revenue is zero; ratio undefined")
    return GapReport(market_id=market_id, k=market.supply, opt=opt, ap=ap.revenue,
                     ear=float(ear(market)), ratio=float(opt / ap.revenue),
                     epsilon=float(epsilon_of_market(market, opt)), ap_price=float(ap.price))
