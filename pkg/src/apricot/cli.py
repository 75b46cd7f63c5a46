"""Command-line front end.

Exit status: 0 on success, 2 on bad input, 3 when a numerical tolerance is
not met.  Artifacts go to ``--out`` (atomically) or to stdout; a one-line
summary is printed last.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import mechanisms as mech
from . import worstcase as wc
from .dists import (
    Market,
    PiecewiseDistribution,
    RevenueCurve,
    flatten_negative_virtual,
    iron,
    reduce_to_triangles,
)
from .io import atomic_write, dumps_json, fmt_num, format_csv, read_json
from .orderstats import order_profile
from .plot import emit_plot

DEFAULT_SEED = 0xA9C0
COMMANDS = ("worst-case", "order-stats", "simulate", "gap", "example1", "lower-bound", "decompose")
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


@dataclass
class ExperimentConfig:
    command: str
    k: int | None = None
    seed: int = DEFAULT_SEED
    trials: int = 100_000
    shards: int = 1
    tol: float = wc.DEFAULT_TOL
    grid: int = 200
    x_max: float = 1e4
    table: int | None = None
    delta: float | None = None
    price: float | None = None
    prices: str | None = None
    market: str | None = None
    curve: str | None = None
    out: str | None = None
    fmt: str = "json"
    plot: str | None = None
    emit_market: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


def _default_tol() -> float:
    env = os.environ.get("APRICOT_TOL")
    if env is None:
        return wc.DEFAULT_TOL
    try:
        return float(env)
    except ValueError:
        raise ValueError(f"APRICOT_TOL must be a number, got {env!r}") from None


def _emit(cfg: ExperimentConfig, text: str) -> str:
    if cfg.out:
        atomic_write(cfg.out, text)
        return cfg.out
    sys.stdout.write(text)
    return "-"


def _summary(cfg: ExperimentConfig, where: str, **scalars) -> None:
    parts = [cfg.command] + [f"{k}={fmt_num(v)}" for k, v in scalars.items()] + [f"out={where}"]
    print(" ".join(parts), file=sys.stdout if cfg.out else sys.stderr)


def _load_market(path) -> Market:
    if not path:
        raise ValueError("--market is required")
    return Market.from_dict(read_json(path))


def _require_k(cfg) -> int:
    if cfg.k is None:
        raise ValueError("--k is required")
    return cfg.k


def _gap_output(cfg, report: mech.GapReport) -> str:
    if cfg.fmt == "csv":
        d = report.to_dict()
        return format_csv(list(d), [list(d.values())])
    return dumps_json(report.to_dict())


def _cmd_worst_case(cfg: ExperimentConfig) -> None:
    k = _require_k(cfg)
    if cfg.table:
        table = wc.universal_bound_table(cfg.table, cfg.tol)
        if cfg.fmt == "csv":
            text = format_csv(["k", "bound", "source", "ear", "asymptotic_exact",
                               "asymptotic_stirling"],
                              [[r.k, r.bound, r.source, r.ear, r.asymptotic_exact,
                                r.asymptotic_stirling] for r in table.rows])
        else:
            text = dumps_json(table.to_dict())
        where = _emit(cfg, text)
        _summary(cfg, where, k_max=cfg.table, universal_max=table.universal_max,
                 argmax_k=table.argmax_k)
        return
    sol = wc.solve_worst_case(k, grid=cfg.grid, x_max=cfg.x_max, tol=cfg.tol)
    if cfg.fmt == "csv":
        text = format_csv(["x", "d1", "revenue", "quantile"], sol.rows())
    else:
        text = dumps_json(sol.to_dict())
    where = _emit(cfg, text)
    if cfg.emit_market:
        market = wc.worst_case_market(k, n_shards=cfg.extra.get("shards", 200),
                                      x_max=cfg.x_max, tol=cfg.tol)
        atomic_write(cfg.emit_market, dumps_json(market.to_dict()))
    if cfg.plot:
        emit_plot([list(zip(sol.x, sol.d1)), list(zip(sol.x, sol.revenue)),
                   list(zip(sol.x, sol.quantile))],
                  ["D1(x)", "R(x)", "Q(x)"], cfg.plot, title=f"worst case, k={k}",
                  xlabel="price x", ylabel="value", logx=True)
    if k == 1:
        _summary(cfg, where, k=k, opt=sol.opt_k1, ear=sol.ear_value)
    else:
        _summary(cfg, where, k=k, alpha=sol.alpha, d1_alpha=sol.d1_alpha, ear=sol.ear_value,
                 bound=min(sol.ear_value, sol.asymptotic_exact))


def _parse_prices(cfg, market: Market) -> list[float]:
    if cfg.prices:
        prices = [float(s) for s in cfg.prices.split(",") if s.strip()]
    else:
        v = market.monopoly_values
        v = v[np.isfinite(v)]
        if not len(v):
            raise ValueError("no finite monopoly values; pass --prices")
        prices = np.geomspace(v.min() / 2, v.max() * 2, cfg.grid).tolist()
    if not prices or any(not p > 0 for p in prices):
        raise ValueError("prices must be positive")
    return prices


def _cmd_order_stats(cfg: ExperimentConfig) -> None:
    market = _load_market(cfg.market)
    rows = []
    for p in _parse_prices(cfg, market):
        prof = order_profile(market, p)
        for j, (e, a, lo, hi) in enumerate(zip(prof.exact, prof.approx, prof.lower,
                                                prof.upper), start=1):
            rows.append([p, j, e, a, lo, hi])
    text = format_csv(["price", "j", "exact", "approx", "lower_bound", "upper_bound"], rows)
    where = _emit(cfg, text)
    if cfg.plot:
        k = market.supply
        series = [[(r[0], r[2]) for r in rows if r[1] == j] for j in range(1, k + 1)]
        emit_plot(series, [f"D{j}" for j in range(1, k + 1)], cfg.plot,
                  title="order statistics", xlabel="price", ylabel="CDF", logx=True)
    _summary(cfg, where, prices=len(rows) // market.supply, k=market.supply)


def _cmd_simulate(cfg: ExperimentConfig) -> None:
    market = _load_market(cfg.market)
    best = mech.ap_optimal(market)
    p = cfg.price if cfg.price is not None else best.price
    if not (p > 0 and math.isfinite(p)):
        raise ValueError("simulation price must be positive and finite")
    analytic = mech.ap_revenue_analytic(market, p)
    mc = mech.ap_revenue_mc(market, p, cfg.trials, cfg.seed, shards=cfg.shards)
    opt = mech.opt_revenue_triangular(market)
    rows = [["AP", analytic, 0.0, p, None],
            ["AP", mc.revenue, mc.stderr, p, mc.seed],
            ["OPT", opt.revenue, 0.0, None, None],
            ["EAR", mech.ear(market), 0.0, None, None]]
    if cfg.fmt == "json":
        text = dumps_json([dict(zip(["mechanism", "revenue", "stderr", "price", "seed"], r))
                           for r in rows])
    else:
        text = format_csv(["mechanism", "revenue", "stderr", "price", "seed"], rows)
    where = _emit(cfg, text)
    _summary(cfg, where, price=p, ap=analytic, ap_mc=mc.revenue, stderr=mc.stderr)


def _cmd_gap(cfg: ExperimentConfig) -> None:
    market = _load_market(cfg.market)
    report = mech.gap_report(market, market_id=os.path.basename(cfg.market))
    where = _emit(cfg, _gap_output(cfg, report))
    _summary(cfg, where, ratio=report.ratio, opt=report.opt, ap=report.ap)


def _cmd_example1(cfg: ExperimentConfig) -> None:
    k = _require_k(cfg)
    report = mech.gap_report(mech.example1_market(k), market_id=f"example1-k{k}")
    where = _emit(cfg, _gap_output(cfg, report))
    _summary(cfg, where, k=k, ratio=report.ratio, opt=report.opt, ap=report.ap)


def _cmd_lower_bound(cfg: ExperimentConfig) -> None:
    k = _require_k(cfg)
    if cfg.delta is None:
        raise ValueError("--delta is required")
    market = mech.lower_bound_instance(k, cfg.delta)
    report = mech.gap_report(market, market_id=f"lower-bound-k{k}-delta{cfg.delta:g}")
    where = _emit(cfg, _gap_output(cfg, report))
    if cfg.emit_market:
        atomic_write(cfg.emit_market, dumps_json(market.to_dict()))
    _summary(cfg, where, k=k, delta=cfg.delta, ratio=report.ratio)


def _cmd_decompose(cfg: ExperimentConfig) -> None:
    if not cfg.curve:
        raise ValueError("--curve is required")
    curve = RevenueCurve.from_dict(read_json(cfg.curve))
    dist = PiecewiseDistribution(curve)
    agents = reduce_to_triangles(dist)
    market = Market(cfg.k or 1, tuple(agents))
    where = _emit(cfg, dumps_json(market.to_dict()))
    if cfg.plot:
        ironed = iron(curve)
        flat = flatten_negative_virtual(ironed)
        emit_plot([list(curve.knots), list(ironed.knots), list(flat.knots)],
                  ["R(q)", "ironed", "flattened"], cfg.plot, title="revenue curve",
                  xlabel="quantile q", ylabel="revenue")
    _summary(cfg, where, pieces=len(agents), ear=mech.ear(market))


_DISPATCH = {
    "worst-case": _cmd_worst_case,
    "order-stats": _cmd_order_stats,
    "simulate": _cmd_simulate,
    "gap": _cmd_gap,
    "example1": _cmd_example1,
    "lower-bound": _cmd_lower_bound,
    "decompose": _cmd_decompose,
}


def run(cfg: ExperimentConfig) -> int:
    try:
        _DISPATCH[cfg.command](cfg)
    except wc.ConvergenceError as exc:
        print(f"error: {exc} (achieved error {fmt_num(exc.achieved)})", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apricot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, k_required=False):
        p.add_argument("--k", type=int, required=k_required, help="units of supply")
        p.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
        p.add_argument("--trials", type=int, default=100_000)
        p.add_argument("--tol", type=float, default=None,
                       help="quadrature tolerance (default $APRICOT_TOL or 1e-8)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", dest="fmt", choices=("csv", "json"), default="json")
        p.add_argument("--plot", help="write an SVG plot here")

    p = sub.add_parser("worst-case", help="worst-case instance and bound constants")
    common(p, k_required=True)
    p.add_argument("--table", type=int, metavar="K_MAX", help="bound table for k = 1..K_MAX")
    p.add_argument("--grid", type=int, default=200)
    p.add_argument("--x-max", type=float, default=1e4)
    p.add_argument("--emit-market", metavar="PATH")
    p.add_argument("--shards", type=int, default=200, help="shards in the emitted market")

    p = sub.add_parser("order-stats", help="exact vs approximate order-statistic CDFs")
    common(p)
    p.add_argument("--market", required=True)
    p.add_argument("--prices", help="comma-separated prices")
    p.add_argument("--grid", type=int, default=20, help="geometric price grid size")

    p = sub.add_parser("simulate", help="analytic and Monte Carlo revenue")
    common(p)
    p.add_argument("--market", required=True)
    p.add_argument("--price", type=float)
    p.add_argument("--shards", type=int, default=1)

    p = sub.add_parser("gap", help="OPT / AP gap report for a market")
    common(p)
    p.add_argument("--market", required=True)

    p = sub.add_parser("example1", help="deterministic 1/i market")
    common(p, k_required=True)

    p = sub.add_parser("lower-bound", help="two-group instance with gap -> 2")
    common(p, k_required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--emit-market", metavar="PATH")

    p = sub.add_parser("decompose", help="reduce a revenue curve to triangular agents")
    common(p)
    p.add_argument("--curve", required=True)
    return parser


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    extra = {}
    shards = getattr(ns, "shards", None)
    if ns.command == "worst-case":
        extra["shards"] = shards
        shards = 1
    return ExperimentConfig(
        command=ns.command, k=ns.k, seed=ns.seed, trials=ns.trials,
        shards=shards or 1, tol=ns.tol if ns.tol is not None else _default_tol(),
        grid=getattr(ns, "grid", 200), x_max=getattr(ns, "x_max", 1e4),
        table=getattr(ns, "table", None), delta=getattr(ns, "delta", None),
        price=getattr(ns, "price", None), prices=getattr(ns, "prices", None),
        market=getattr(ns, "market", None), curve=getattr(ns, "curve", None),
        out=ns.out, fmt=ns.fmt, plot=ns.plot, emit_market=getattr(ns, "emit_market", None),
        extra=extra)


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
