"""Worst-case large-market instance and its revenue bounds.

The worst case keeps anonymous-pricing revenue at exactly 1 for every price
``x >= 1/k``.  In the large-market limit the first-order statistic then
solves

    1 = x * (k - sum_{t<k} (k - t)/t! * D1 * (-ln D1)**t),

i.e. ``1/x = E[min(k, Poisson(L))]`` with ``L = -ln D1(x)``.  Everything is
computed in the rate variable ``L``: the cumulative monopoly revenue is
``R = x*L`` and the cumulative monopoly quantile becomes

    Q(x) = int_0^{L(x)} k * Pr[Poisson(s) >= k+1] / E[min(k, Poisson(s))] ds,

a smooth integral with no singularity at either end.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gammainc, gammaincc, gammaln

from .dists import Market, TriangularAgent

__all__ = [
    "ConvergenceError",
    "DEFAULT_TOL",
    "WorstCaseSolution",
    "BoundRow",
    "BoundTable",
    "solve_first_order_cdf",
    "first_order_rate",
    "cumulative_revenue",
    "cumulative_quantile",
    "alpha",
    "beta",
    "ear_worst_case",
    "opt_k1",
    "asymptotic_upper_bound",
    "universal_bound_table",
    "solve_worst_case",
    "worst_case_market",
]

DEFAULT_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """A quadrature or root-finder missed its tolerance."""

    def __init__(self, message: str, achieved: float = math.nan):
        super().__init__(message)
        self.achieved = achieved


def _check_k(k: int) -> int:
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    return int(k)


def _capped_mean(k: int, L: float) -> float:
    """``E[min(k, Poisson(L))]``."""
    if L == 0.0:
        return 0.0
    head = L * gammaincc(k - 1, L) if k > 1 else 0.0
    return float(head + k * gammainc(k, L))


def _deficit(k: int, L: float) -> float:
    """``k - E[min(k, Poisson(L))] = sum_{t<k} (k - t)/t! e^-L L^t``."""
    if math.isinf(L):
        return 0.0
    if L == 0.0:
        return float(k)
    t = np.arange(k)
    return float(np.sum((k - t) * np.exp(-L + t * math.log(L) - gammaln(t + 1))))


def _quantile_density(k: int, s: float) -> float:
    """``dQ/dL``; equals ``1 - L * Pr[Pois <= k-1] / E[min(k, Pois)]``."""
    if s == 0.0:
        return 0.0
    g = _capped_mean(k, s)
    return float(k * gammainc(k + 1, s) / g)


def first_order_rate(k: int, x: float) -> float:
    """``L = -ln D1(x)`` for the worst-case instance; ``inf`` at ``x = 1/k``."""
    k = _check_k(k)
    if not x >= 1.0 / k:
        raise ValueError(f"x must be >= 1/k = {1.0 / k}, got {x}")
    if math.isinf(x):
        return 0.0
    target = 1.0 / x
    if target >= k:
        return math.inf
    if target <= k / 2:
        f = lambda L: _capped_mean(k, L) - target
    else:
        gap = k - target
        f = lambda L: gap - _deficit(k, L)
    hi = max(2.0 * k, 1.0)
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise ConvergenceError(f"no bracket for D1 at k={k}, x={x}")
    if f(0.0) >= 0:
        return 0.0
    return brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def solve_first_order_cdf(k: int, x: float) -> float:
    """``D1(x)``, the worst-case first-order statistic at price ``x >= 1/k``."""
    return math.exp(-first_order_rate(k, x))


def cumulative_revenue(k: int, x: float) -> float:
    """``R(x) = x * (-ln D1(x))``."""
    k = _check_k(k)
    if not x > 1.0 / k:
        raise ValueError(f"x must exceed 1/k = {1.0 / k}, got {x}")
    return x * first_order_rate(k, x)


def _quantile_between(k: int, lo: float, hi: float, tol: float = DEFAULT_TOL) -> float:
    """``int_lo^hi dQ/dL dL``."""
    if hi <= lo:
        return 0.0
    points = [k] if lo < k < hi else None
    val, err = quad(lambda s: _quantile_density(k, s), lo, hi, epsabs=tol * 1e-2,
                    epsrel=1e-12, limit=400, points=points)
    if not err <= tol:
        raise ConvergenceError(f"quadrature error {err:.3g} exceeds tolerance {tol:.3g}", err)
    return val


def _quantile_of_rate(k: int, L: float, tol: float = DEFAULT_TOL) -> float:
    return _quantile_between(k, 0.0, L, tol)


def cumulative_quantile(k: int, x: float, tol: float = DEFAULT_TOL) -> float:
    """``Q(x)``, total monopoly quantile of worst-case agents valued at least ``x``."""
    k = _check_k(k)
    if not x > 1.0 / k:
        raise ValueError(f"x must exceed 1/k = {1.0 / k}, got {x}")
    return _quantile_of_rate(k, first_order_rate(k, x), tol)


@lru_cache(maxsize=None)
def _alpha_rate(k: int, tol: float) -> float:
    f = lambda L: _quantile_of_rate(k, L, tol) - k
    lo, hi = 0.0, 2.0 * k + 4.0
    while f(hi) < 0:
        lo, hi = hi, 2.0 * hi
    return brentq(f, lo, hi, xtol=1e-13, rtol=1e-13, maxiter=200)


def alpha(k: int, tol: float = DEFAULT_TOL) -> float:
    """``Q^{-1}(k)``: the price at which the worst-case quantile reaches ``k``."""
    k = _check_k(k)
    return 1.0 / _capped_mean(k, _alpha_rate(k, tol))


def _poisson_mode_mass(k: int) -> float:
    """``k**k / (k! e**k)`` in log space."""
    return math.exp(k * math.log(k) - math.lgamma(k + 1) - k)


def beta(k: int) -> float:
    """``D1^{-1}(e^-k)`` in closed form: ``(1/k) / (1 - k^k/(k! e^k))``."""
    k = _check_k(k)
    return (1.0 / k) / (1.0 - _poisson_mode_mass(k))


def ear_worst_case(k: int, tol: float = DEFAULT_TOL) -> float:
    """Ex-ante relaxation of the worst case, ``R(alpha)``."""
    k = _check_k(k)
    L = _alpha_rate(k, tol)
    return L / _capped_mean(k, L)


def opt_k1(tol: float = 1e-5) -> float:
    """Optimal revenue of the single-unit worst case, ``2 + int_1^inf (1 - e^-Q(x)) dx``.

    With ``x = 1/(1 - e^-L)`` the integral runs over ``L`` in ``(0, inf)``
    and its integrand tends to 1/4 as ``L -> 0`` and decays like ``e^-L``.
    """
    inner_tol = min(tol * 1e-3, DEFAULT_TOL)

    def integrand(L):
        if L == 0.0:
            return 0.25
        q = _quantile_of_rate(1, L, inner_tol)
        return -math.expm1(-q) * math.exp(-L) / math.expm1(-L) ** 2

    val, err = quad(integrand, 0.0, np.inf, epsabs=tol * 1e-2, epsrel=1e-10, limit=400)
    if not err <= tol:
        raise ConvergenceError(f"OPT quadrature error {err:.3g} exceeds {tol:.3g}", err)
    return 2.0 + val


def asymptotic_upper_bound(k: int) -> tuple[float, float]:
    """``(2/(1 - k^k/(k! e^k)), 2/(1 - 1/sqrt(2 pi k)))``."""
    k = _check_k(k)
    return 2.0 / (1.0 - _poisson_mode_mass(k)), 2.0 / (1.0 - 1.0 / math.sqrt(2 * math.pi * k))


@dataclass(frozen=True)
class BoundRow:
    k: int
    bound: float
    source: str
    ear: float
    asymptotic_exact: float
    asymptotic_stirling: float


@dataclass(frozen=True)
class BoundTable:
    rows: tuple[BoundRow, ...]
    universal_max: float
    argmax_k: int

    def bound_for(self, k: int) -> float:
        for row in self.rows:
            if row.k == k:
                return row.bound
        raise KeyError(k)

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows],
                "universal_max": self.universal_max, "argmax_k": self.argmax_k}

    @classmethod
    def from_dict(cls, d: dict) -> "BoundTable":
        return cls(tuple(BoundRow(**r) for r in d["rows"]), float(d["universal_max"]),
                   int(d["argmax_k"]))


def universal_bound_table(k_max: int, tol: float = DEFAULT_TOL) -> BoundTable:
    """Tightest computable bound on ``OPT/AP`` for ``k = 1..k_max``."""
    k_max = _check_k(k_max)
    rows = []
    for k in range(1, k_max + 1):
        exact, stirling = asymptotic_upper_bound(k)
        e = ear_worst_case(k, tol)
        if k == 1:
            bound, source = opt_k1(), "opt"
        elif e <= exact:
            bound, source = e, "ear"
        else:
            bound, source = exact, "asymptotic"
        rows.append(BoundRow(k, bound, source, e, exact, stirling))
    top = max(rows, key=lambda r: r.bound)
    return BoundTable(tuple(rows), top.bound, top.k)


@dataclass(frozen=True)
class WorstCaseSolution:
    k: int
    x: tuple[float, ...]
    d1: tuple[float, ...]
    revenue: tuple[float, ...]
    quantile: tuple[float, ...]
    alpha: float
    beta: float
    d1_alpha: float
    ear_value: float
    asymptotic_exact: float
    asymptotic_stirling: float
    opt_k1: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("x", "d1", "revenue", "quantile"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorstCaseSolution":
        d = dict(d)
        for key in ("x", "d1", "revenue", "quantile"):
            d[key] = tuple(float(v) for v in d[key])
        return cls(**d)

    def rows(self):
        return zip(self.x, self.d1, self.revenue, self.quantile)


def _grid(k: int, n: int, x_max: float) -> np.ndarray:
    x_lo = (1.0 / k) * (1.0 + 1e-3)
    if not x_max > x_lo:
        raise ValueError(f"x_max must exceed {x_lo}")
    return np.geomspace(x_lo, x_max, n)


def solve_worst_case(k: int, grid: int = 200, x_max: float = 1e4,
                     tol: float = DEFAULT_TOL) -> WorstCaseSolution:
    """Tabulate ``D1, R, Q`` on a geometric grid plus the scalar summaries."""
    k = _check_k(k)
    if grid < 2:
        raise ValueError("grid needs at least two points")
    xs = _grid(k, grid, x_max)
    rates = np.array([first_order_rate(k, float(x)) for x in xs])
    # Q accumulated from the top of the grid downward, one panel at a time.
    pieces = [_quantile_between(k, rates[i + 1], rates[i], tol) for i in range(grid - 1)]
    q_top = _quantile_of_rate(k, rates[-1], tol)
    qs = q_top + np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    a_rate = _alpha_rate(k, tol)
    exact, stirling = asymptotic_upper_bound(k)
    return WorstCaseSolution(
        k=k, x=tuple(xs.tolist()), d1=tuple(np.exp(-rates).tolist()),
        revenue=tuple((xs * rates).tolist()), quantile=tuple(qs.tolist()),
        alpha=alpha(k, tol), beta=beta(k), d1_alpha=math.exp(-a_rate),
        ear_value=ear_worst_case(k, tol), asymptotic_exact=exact,
        asymptotic_stirling=stirling, opt_k1=opt_k1() if k == 1 else None)


def worst_case_market(k: int, n_shards: int = 200, x_max: float = 1e4,
                      eps_target: float = 1e-4, tol: float = DEFAULT_TOL) -> Market:
    """Discretise the worst case into triangular agent types.

    Shard ``[x_a, x_b]`` of a geometric grid on ``[(1 + 1e-3)/k, x_max]``
    holds revenue ``R(x_a) - R(x_b)`` and quantile ``Q(x_a) - Q(x_b)``;
    everything above ``x_max`` is one more shard, and the revenue
    ``R(inf) = 1`` sits on zero-quantile agents.  Each shard is split into
    ``ceil(r / eps_target)`` identical agents.
    """
    k = _check_k(k)
    if n_shards < 10:
        raise ValueError("n_shards must be >= 10")
    xs = _grid(k, n_shards + 1, x_max)
    rates = [first_order_rate(k, float(x)) for x in xs]
    revs = [float(x) * L for x, L in zip(xs, rates)]
    shards = []
    for i in range(n_shards):
        r = revs[i] - revs[i + 1]
        q = _quantile_between(k, rates[i + 1], rates[i], tol)
        shards.append((r, q))
    shards.append((revs[-1] - 1.0, _quantile_of_rate(k, rates[-1], tol)))
    shards.append((1.0, 0.0))
    agents = []
    for r, q in shards:
        if r <= 0:
            continue
        count = max(1, math.ceil(r / eps_target))
        agents.append(TriangularAgent(r / count, q / count, count))
    return Market(k, tuple(agents))
