"""Value distributions in quantile space.

Agents are described by their revenue curves ``R(q) = q * v(q)``.  The
workhorse is :class:`TriangularAgent`, a truncated-Pareto distribution whose
revenue curve is the triangle ``(0, 0) -> (q*, r*) -> (1, 0)``.  General
agents are :class:`PiecewiseDistribution` objects with a piecewise-linear
revenue curve; they are reduced to triangular agents by ironing, flattening
the negative-virtual-value tail and splitting the remaining curve into one
triangle per linear segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "REL_TOL",
    "TriangularAgent",
    "Market",
    "RevenueCurve",
    "PiecewiseDistribution",
    "tri_cdf",
    "tri_accept_prob",
    "revenue_curve_of",
    "iron",
    "flatten_negative_virtual",
    "truncate_at_monopoly",
    "decompose_to_triangles",
    "reduce_to_triangles",
    "check_regular",
    "check_quasi_regular",
    "epsilon_of_market",
    "split_market",
]

# Relative tolerance for slope comparisons (concavity, monotonicity).
REL_TOL = 1e-9


def _close_or_less(a: float, b: float, rel: float = REL_TOL) -> bool:
    """``a <= b`` up to a relative tolerance (absolute floor of ``rel``)."""
    return a <= b + rel * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class TriangularAgent:
    """Truncated-Pareto buyer ``Tri(r*, q*)`` with ``count`` identical copies.

    The CDF is ``1 - 1/(1 + (v/r*)(1 - q*))`` below the monopoly value
    ``v* = r*/q*`` and jumps to 1 there (point mass ``q*``).  With
    ``q* = 0`` the monopoly value is infinite and the mass never appears.
    """

    monopoly_revenue: float
    monopoly_quantile: float
    count: int = 1

    def __post_init__(self):
        r, q = float(self.monopoly_revenue), float(self.monopoly_quantile)
        if not (r > 0 and math.isfinite(r)):
            raise ValueError(f"monopoly_revenue must be positive and finite, got {r}")
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"monopoly_quantile must lie in [0, 1], got {q}")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"count must be a positive integer, got {self.count}")
        object.__setattr__(self, "monopoly_revenue", r)
        object.__setattr__(self, "monopoly_quantile", q)
        object.__setattr__(self, "count", int(self.count))

    @property
    def monopoly_value(self) -> float:
        if self.monopoly_quantile == 0.0:
            return math.inf
        return self.monopoly_revenue / self.monopoly_quantile

    def cdf(self, v: float) -> float:
        return tri_cdf(self, v)

    def accept_prob(self, p: float) -> float:
        return tri_accept_prob(self, p)

    def revenue_curve(self) -> "RevenueCurve":
        r, q = self.monopoly_revenue, self.monopoly_quantile
        if q == 0.0:
            raise ValueError("a zero-quantile agent has no finite revenue curve")
        if q == 1.0:
            return RevenueCurve(((0.0, 0.0), (1.0, r)))
        return RevenueCurve(((0.0, 0.0), (q, r), (1.0, 0.0)))

    def to_dict(self) -> dict:
        return {"r_star": self.monopoly_revenue, "q_star": self.monopoly_quantile,
                "count": self.count}

    @classmethod
    def from_dict(cls, d: dict) -> "TriangularAgent":
        return cls(float(d["r_star"]), float(d["q_star"]), int(d.get("count", 1)))


def tri_cdf(agent: TriangularAgent, v: float) -> float:
    """CDF of ``Tri(r*, q*)`` at ``v >= 0``."""
    if v < 0:
        raise ValueError(f"value must be nonnegative, got {v}")
    if v >= agent.monopoly_value:
        return 1.0
    r, q = agent.monopoly_revenue, agent.monopoly_quantile
    return 1.0 - 1.0 / (1.0 + (v / r) * (1.0 - q))


def tri_accept_prob(agent: TriangularAgent, p: float) -> float:
    """``Pr[value >= p]``; at ``p = v*`` this is exactly the mass ``q*``."""
    if not p > 0:
        raise ValueError(f"price must be positive, got {p}")
    v_star = agent.monopoly_value
    if p > v_star:
        return 0.0
    if p == v_star:
        return agent.monopoly_quantile
    r, q = agent.monopoly_revenue, agent.monopoly_quantile
    return r / (r + (1.0 - q) * p)


@dataclass(frozen=True)
class Market:
    """Supply ``k`` plus a multiset of triangular agents.

    Agents carry a ``count`` multiplicity, so markets with astronomically many
    identical buyers are stored as (type, count) pairs.
    """

    supply: int
    agents: tuple[TriangularAgent, ...]

    def __post_init__(self):
        if int(self.supply) != self.supply or self.supply < 1:
            raise ValueError(f"supply must be a positive integer, got {self.supply}")
        agents = tuple(self.agents)
        if not agents:
            raise ValueError("market needs at least one agent")
        for a in agents:
            if not isinstance(a, TriangularAgent):
                raise TypeError(f"market agents must be TriangularAgent, got {type(a).__name__}")
        object.__setattr__(self, "supply", int(self.supply))
        object.__setattr__(self, "agents", agents)

    @property
    def n_agents(self) -> int:
        return sum(a.count for a in self.agents)

    @property
    def revenues(self) -> np.ndarray:
        return np.array([a.monopoly_revenue for a in self.agents])

    @property
    def quantiles(self) -> np.ndarray:
        return np.array([a.monopoly_quantile for a in self.agents])

    @property
    def counts(self) -> np.ndarray:
        return np.array([a.count for a in self.agents], dtype=float)

    @property
    def monopoly_values(self) -> np.ndarray:
        return np.array([a.monopoly_value for a in self.agents])

    def accept_probs(self, p: float, strict: bool = False) -> np.ndarray:
        """Per-type acceptance probability at price ``p``.

        With ``strict`` the point masses at ``v* == p`` are excluded, i.e.
        the result is ``Pr[value > p]`` (the right limit in ``p``).
        """
        if not p > 0:
            raise ValueError(f"price must be positive, got {p}")
        r, q, v = self.revenues, self.quantiles, self.monopoly_values
        if math.isinf(p):
            return np.zeros_like(r)
        out = r / (r + (1.0 - q) * p)
        out = np.where(p > v, 0.0, out)
        if strict:
            out = np.where(p >= v, 0.0, out)
        else:
            out = np.where(p == v, q, out)
        return out

    def to_dict(self) -> dict:
        return {"k": self.supply, "agents": [a.to_dict() for a in self.agents]}

    @classmethod
    def from_dict(cls, d: dict) -> "Market":
        if not isinstance(d, dict) or "k" not in d or "agents" not in d:
            raise ValueError("market JSON needs 'k' and 'agents' keys")
        return cls(int(d["k"]), tuple(TriangularAgent.from_dict(a) for a in d["agents"]))


@dataclass(frozen=True)
class RevenueCurve:
    """Piecewise-linear revenue curve through ``knots`` (q, r), from (0, 0)."""

    knots: tuple[tuple[float, float], ...]

    def __post_init__(self):
        knots = tuple((float(q), float(r)) for q, r in self.knots)
        if len(knots) < 2:
            raise ValueError("a revenue curve needs at least two knots")
        if knots[0] != (0.0, 0.0):
            raise ValueError(f"first knot must be (0, 0), got {knots[0]}")
        qs = [q for q, _ in knots]
        if any(b <= a for a, b in zip(qs, qs[1:])):
            raise ValueError("knot quantiles must be strictly increasing")
        if qs[-1] > 1.0:
            raise ValueError("knot quantiles must lie in [0, 1]")
        if any(r < 0 or not math.isfinite(r) for _, r in knots):
            raise ValueError("knot revenues must be finite and nonnegative")
        object.__setattr__(self, "knots", knots)

    @property
    def q(self) -> np.ndarray:
        return np.array([k[0] for k in self.knots])

    @property
    def r(self) -> np.ndarray:
        return np.array([k[1] for k in self.knots])

    @property
    def slopes(self) -> np.ndarray:
        """Marginal revenue (virtual value) on each segment."""
        return np.diff(self.r) / np.diff(self.q)

    def __call__(self, q):
        return np.interp(q, self.q, self.r)

    @property
    def monopoly_index(self) -> int:
        """Index of the smallest-quantile knot achieving the maximum revenue."""
        return int(np.argmax(self.r))

    @property
    def monopoly(self) -> tuple[float, float]:
        return self.knots[self.monopoly_index]

    def is_concave(self, rel: float = REL_TOL) -> bool:
        s = self.slopes
        return all(_close_or_less(b, a, rel) for a, b in zip(s, s[1:]))

    def to_dict(self) -> dict:
        return {"knots": [list(k) for k in self.knots]}

    @classmethod
    def from_dict(cls, d: dict) -> "RevenueCurve":
        if not isinstance(d, dict) or "knots" not in d:
            raise ValueError("revenue curve JSON needs a 'knots' key")
        return cls(tuple((float(q), float(r)) for q, r in d["knots"]))


@dataclass(frozen=True)
class PiecewiseDistribution:
    """Value distribution whose revenue curve is piecewise linear on [0, 1].

    On a segment ``R(q) = a + s*q`` the value map is ``v(q) = s + a/q``: a
    point mass when ``a == 0`` and a continuous piece otherwise.  The first
    segment always starts at the origin, so the top of the support is an
    atom at ``max_value``.  Discrete distributions built with
    :meth:`from_atoms` use the usual interpolated revenue curve through the
    points ``(Pr[v >= v_i], v_i * Pr[v >= v_i])``.
    """

    curve: RevenueCurve
    _values: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        knots = self.curve.knots
        if knots[-1][0] != 1.0:
            raise ValueError("a distribution's revenue curve must end at q = 1")
        if knots[1][1] <= 0:
            raise ValueError("the top of the support must be a positive value")
        values = [knots[1][1] / knots[1][0]] + [r / q for q, r in knots[1:]]
        # v(q) = R(q)/q must be nonincreasing; checking at knots suffices.
        for hi, lo in zip(values, values[1:]):
            if not _close_or_less(lo, hi):
                raise ValueError("revenue curve does not define a valid distribution "
                                 "(R(q)/q increases)")
        object.__setattr__(self, "_values", tuple(values))

    @classmethod
    def from_atoms(cls, values: Iterable[float], probs: Iterable[float]) -> "PiecewiseDistribution":
        pairs: dict[float, float] = {}
        for v, m in zip(values, probs):
            v, m = float(v), float(m)
            if v < 0:
                raise ValueError(f"values must be nonnegative, got {v}")
            if m < 0:
                raise ValueError(f"probabilities must be nonnegative, got {m}")
            if m > 0:
                pairs[v] = pairs.get(v, 0.0) + m
        total = sum(pairs.values())
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"probabilities must sum to 1, got {total}")
        knots = [(0.0, 0.0)]
        cum = 0.0
        for v in sorted(pairs, reverse=True):
            cum += pairs[v] / total
            knots.append((cum, cum * v))
        knots[-1] = (1.0, knots[-1][1] / knots[-1][0])
        return cls(RevenueCurve(tuple(knots)))

    @classmethod
    def point_mass(cls, v: float) -> "PiecewiseDistribution":
        return cls.from_atoms([v], [1.0])

    @classmethod
    def triangular(cls, agent: TriangularAgent) -> "PiecewiseDistribution":
        return cls(agent.revenue_curve())

    @property
    def max_value(self) -> float:
        return self._values[0]

    @property
    def min_value(self) -> float:
        return self._values[-1]

    def value_at(self, q: float) -> float:
        """``v(q)``, the value whose quantile is ``q``."""
        if not 0.0 < q <= 1.0:
            raise ValueError(f"quantile must lie in (0, 1], got {q}")
        return float(self.curve(q)) / q

    def quantile(self, v: float) -> float:
        """``Pr[value >= v]``."""
        if v <= self.min_value:
            return 1.0
        if v > self.max_value:
            return 0.0
        knots = self.curve.knots
        for (qa, ra), (qb, rb), vb in zip(knots, knots[1:], self._values[1:]):
            if v < vb:
                continue
            s = (rb - ra) / (qb - qa)
            intercept = ra - s * qa
            if intercept <= 0 or v == s:
                # point mass at v == s covers the whole segment
                return qb
            return min(qb, max(qa, intercept / (v - s)))
        return 1.0

    def cdf(self, v: float) -> float:
        """``Pr[value <= v]``."""
        if v < 0:
            raise ValueError(f"value must be nonnegative, got {v}")
        return 1.0 - self._quantile_strict(v)

    def _quantile_strict(self, v: float) -> float:
        q = self.quantile(v)
        knots = self.curve.knots
        # Strip an atom sitting exactly at v.
        for (qa, ra), (qb, rb) in zip(knots, knots[1:]):
            s = (rb - ra) / (qb - qa)
            if math.isclose(ra - s * qa, 0.0, abs_tol=1e-15) and math.isclose(s, v, rel_tol=1e-12):
                return qa
        return q

    def virtual_values(self) -> np.ndarray:
        """Marginal revenue per curve segment, top of the support first."""
        return self.curve.slopes

    def conditional_virtual_values(self) -> np.ndarray:
        """``E[phi(w) | w <= v]`` at each segment's upper value.

        In quantile space this is the chord slope from ``(q, R(q))`` to
        ``(1, R(1))`` taken at each segment's left knot.
        """
        q, r = self.curve.q[:-1], self.curve.r[:-1]
        return (self.curve.r[-1] - r) / (1.0 - q)


def revenue_curve_of(dist: PiecewiseDistribution) -> RevenueCurve:
    if dist.min_value < 0:
        raise ValueError("distribution has negative values")
    return dist.curve


def iron(curve: RevenueCurve) -> RevenueCurve:
    """Least concave majorant of a piecewise-linear curve (upper hull)."""
    hull: list[tuple[float, float]] = []
    for p in curve.knots:
        while len(hull) >= 2:
            (q0, r0), (q1, r1) = hull[-2], hull[-1]
            # Drop the middle point unless it is strictly above the chord.
            cross = (q1 - q0) * (p[1] - r0) - (r1 - r0) * (p[0] - q0)
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return RevenueCurve(tuple(hull))


def flatten_negative_virtual(curve: RevenueCurve) -> RevenueCurve:
    """Replace the tail past the monopoly quantile by a straight line to (1, 0).

    The tail ``r* (1 - q)/(1 - q*)`` has constant negative virtual value and
    agrees with the input at ``q*``.
    """
    if not curve.is_concave():
        raise ValueError("flatten_negative_virtual needs a concave (ironed) curve")
    i = curve.monopoly_index
    q_star, _ = curve.knots[i]
    if q_star == 1.0:
        return curve
    return RevenueCurve(curve.knots[: i + 1] + ((1.0, 0.0),))


def truncate_at_monopoly(curve: RevenueCurve) -> RevenueCurve:
    i = curve.monopoly_index
    if i == 0:
        raise ValueError("curve has no positive revenue")
    return RevenueCurve(curve.knots[: i + 1])


def decompose_to_triangles(curve: RevenueCurve) -> list[TriangularAgent]:
    """One triangular agent per linear segment of a concave, increasing curve.

    Segment ``z`` becomes ``Tri(r_z - r_{z-1}, q_z - q_{z-1})``, whose
    monopoly value is the segment's slope.
    """
    if not curve.is_concave():
        raise ValueError("decompose_to_triangles needs a concave curve")
    out = []
    for (qa, ra), (qb, rb) in zip(curve.knots, curve.knots[1:]):
        if rb - ra <= 0:
            raise ValueError("segment with nonpositive revenue increment; truncate at q* first")
        out.append(TriangularAgent(rb - ra, qb - qa))
    return out


def reduce_to_triangles(dist: PiecewiseDistribution) -> list[TriangularAgent]:
    """Iron, flatten the negative tail, truncate at q* and decompose."""
    flat = flatten_negative_virtual(iron(revenue_curve_of(dist)))
    return decompose_to_triangles(truncate_at_monopoly(flat))


def check_regular(dist: PiecewiseDistribution) -> bool:
    return revenue_curve_of(dist).is_concave()


def check_quasi_regular(dist: PiecewiseDistribution) -> bool:
    """Whether ``E[phi(w) | w <= v]`` is weakly increasing in ``v``.

    The conditional expectation is monotone between knots, so it is enough
    to compare consecutive knots plus the limit at q -> 1 (last slope).
    """
    ce = list(dist.conditional_virtual_values()) + [dist.virtual_values()[-1]]
    # Ordered from high values to low values; must be nonincreasing.
    return all(_close_or_less(b, a) for a, b in zip(ce, ce[1:]))


def epsilon_of_market(market: Market, opt_revenue: float) -> float:
    """Smallest ``eps`` for which the market is eps-large."""
    if not opt_revenue > 0:
        raise ValueError(f"opt_revenue must be positive, got {opt_revenue}")
    return max(a.monopoly_revenue for a in market.agents) / opt_revenue


def split_market(market: Market, shards: int) -> Market:
    """Split every agent into ``shards`` copies of ``Tri(r*/m, q*/m)``."""
    if shards < 1:
        raise ValueError("shards must be >= 1")
    return Market(market.supply, tuple(
        TriangularAgent(a.monopoly_revenue / shards, a.monopoly_quantile / shards,
                        a.count * shards)
        for a in market.agents))

