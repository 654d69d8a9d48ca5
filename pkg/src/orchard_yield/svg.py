"""Minimal SVG line/scatter charts.

Output is plain text with fixed number formatting so identical inputs give
identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 150, 40, 50


@dataclass
class Series:
    label: str
    xs: Sequence[float]
    ys: Sequence[float]
    style: str = "line"  # "line", "step" or "points"


def _f(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / n
    return [lo + i * step for i in range(n + 1)]


def _bounds(values: Sequence[float], fixed: Optional[tuple[float, float]]) -> tuple[float, float]:
    if fixed is not None:
        return fixed
    if not values:
        return 0.0, 1.0
    lo, hi = min(values), max(values)
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def line_chart(
    series: Sequence[Series],
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    x_range: Optional[tuple[float, float]] = None,
    y_range: Optional[tuple[float, float]] = None,
) -> str:
    xs_all = [x for s in series for x in s.xs]
    ys_all = [y for s in series for y in s.ys]
    x0, x1 = _bounds(xs_all, x_range)
    y0, y1 = _bounds(ys_all, y_range)
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def px(x: float) -> float:
        return MARGIN_L + (x - x0) / (x1 - x0) * pw

    def py(y: float) -> float:
        return MARGIN_T + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text class="title" x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<g class="axes" stroke="black" fill="none">'
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T + ph}" x2="{MARGIN_L + pw}" y2="{MARGIN_T + ph}"/>'
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{MARGIN_T + ph}"/></g>',
    ]
    for t in _nice_ticks(x0, x1):
        out.append(
            f'<text class="xtick" x="{_f(px(t))}" y="{MARGIN_T + ph + 16}" text-anchor="middle">{t:.3g}</text>'
        )
    for t in _nice_ticks(y0, y1):
        out.append(f'<text class="ytick" x="{MARGIN_L - 6}" y="{_f(py(t) + 4)}" text-anchor="end">{t:.3g}</text>')
    out.append(
        f'<text class="xlabel" x="{MARGIN_L + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(x_label)}</text>'
    )
    out.append(
        f'<text class="ylabel" x="16" y="{MARGIN_T + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {MARGIN_T + ph / 2:.1f})">{escape(y_label)}</text>'
    )
    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        pts = list(zip(s.xs, s.ys))
        if s.style == "points":
            body = "".join(f'<circle cx="{_f(px(x))}" cy="{_f(py(y))}" r="3"/>' for x, y in pts)
            out.append(f'<g class="series" data-label="{escape(s.label)}" fill="{color}">{body}</g>')
        else:
            if s.style == "step" and pts:
                stepped = [pts[0]]
                for (xa, ya), (xb, yb) in zip(pts, pts[1:]):
                    stepped += [(xb, ya), (xb, yb)]
                pts = stepped
            coords = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in pts)
            out.append(
                f'<polyline class="series" data-label="{escape(s.label)}" fill="none" '
                f'stroke="{color}" stroke-width="1.5" points="{coords}"/>'
            )
        ly = MARGIN_T + 14 + 18 * k
        lx = WIDTH - MARGIN_R + 12
        out.append(
            f'<g class="legend"><rect x="{lx}" y="{ly - 9}" width="12" height="10" fill="{color}"/>'
            f'<text x="{lx + 18}" y="{ly}">{escape(s.label)}</text></g>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
