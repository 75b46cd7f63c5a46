"""Minimal deterministic SVG line plots (no charting dependency)."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

from .io import atomic_write

__all__ = ["render_svg", "emit_plot"]

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
_W, _H = 640, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 160, 40, 50


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def render_svg(series: Sequence[Sequence[tuple[float, float]]], labels: Sequence[str],
               title: str = "", xlabel: str = "x", ylabel: str = "y",
               logx: bool = False) -> str:
    """Render the series as polylines; identical input gives identical bytes."""
    if not series or not any(len(s) for s in series):
        raise ValueError("nothing to plot: series is empty")
    if len(labels) != len(series):
        raise ValueError("need one label per series")
    tx = (lambda x: math.log10(x)) if logx else (lambda x: x)
    clean = [[(tx(x), y) for x, y in s
              if math.isfinite(x) and math.isfinite(y) and (x > 0 or not logx)]
             for s in series]
    pts = [p for s in clean for p in s]
    if not pts:
        raise ValueError("nothing to plot: no finite points")
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def sx(x):
        return _LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return _TOP + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>']
    if title:
        out.append(f'<text x="{_W / 2:.1f}" y="22" text-anchor="middle" font-size="14">'
                   f'{escape(title)}</text>')
    base_y, base_x = _TOP + ph, _LEFT
    out.append(f'<line x1="{base_x}" y1="{base_y}" x2="{base_x + pw}" y2="{base_y}" stroke="black"/>')
    out.append(f'<line x1="{base_x}" y1="{_TOP}" x2="{base_x}" y2="{base_y}" stroke="black"/>')
    for t in _ticks(x0, x1):
        label = f"{10 ** t:.3g}" if logx else f"{t:.3g}"
        out.append(f'<line x1="{_fmt(sx(t))}" y1="{base_y}" x2="{_fmt(sx(t))}" '
                   f'y2="{base_y + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(sx(t))}" y="{base_y + 18}" text-anchor="middle">{label}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{base_x - 5}" y1="{_fmt(sy(t))}" x2="{base_x}" '
                   f'y2="{_fmt(sy(t))}" stroke="black"/>')
        out.append(f'<text x="{base_x - 8}" y="{_fmt(sy(t) + 4)}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{_LEFT + pw / 2:.1f}" y="{_H - 12}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{_TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {_TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (s, label) in enumerate(zip(clean, labels)):
        color = _PALETTE[i % len(_PALETTE)]
        if s:
            coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in s)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = _TOP + 10 + 18 * i
        lx = _W - _RIGHT + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series, labels, path, **kwargs) -> str:
    """Write :func:`render_svg` output to ``path`` atomically; returns the path."""
    atomic_write(path, render_svg(series, labels, **kwargs))
    return str(path)
