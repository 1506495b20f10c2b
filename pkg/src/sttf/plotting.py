"""Minimal SVG line charts (no plotting dependency)."""

from __future__ import annotations

from typing import Mapping, Optional
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#222222", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _points(y, x0, y0, w, h, lo, hi):
    n = y.size
    xs = x0 + (np.arange(n) * (w / max(n - 1, 1)))
    span = hi - lo if hi > lo else 1.0
    ys = y0 + h - (y - lo) / span * h
    return " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(xs, ys))


def line_chart_svg(series: Mapping[str, np.ndarray], title: str = "",
                   width: int = 800, height: int = 320, x_offset: int = 0) -> str:
    """One polyline per named series, a legend and min/max axis labels.

    The first series is drawn first (underneath) so the actual signal stays
    visible behind predictions.
    """
    arrays = {k: np.asarray(v, dtype=np.float64).ravel() for k, v in series.items()}
    if not arrays:
        raise ValueError("nothing to plot")
    n = max(a.size for a in arrays.values())
    lo = min(float(a.min()) for a in arrays.values())
    hi = max(float(a.max()) for a in arrays.values())
    left, top, right, bottom = 60, 30, 20, 40
    w, h = width - left - right, height - top - bottom

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="#999"/>']
    if title:
        out.append(f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="13">{escape(title)}</text>')
    style = 'font-family="sans-serif" font-size="11"'
    out.append(f'<text x="{left - 5}" y="{top + 4}" text-anchor="end" {style}>{hi:.1f}</text>')
    out.append(f'<text x="{left - 5}" y="{top + h}" text-anchor="end" {style}>{lo:.1f}</text>')
    out.append(f'<text x="{left}" y="{top + h + 15}" {style}>{x_offset}</text>')
    out.append(f'<text x="{left + w}" y="{top + h + 15}" text-anchor="end" {style}>'
               f'{x_offset + n - 1}</text>')
    for i, (name, y) in enumerate(arrays.items()):
        colour = PALETTE[i % len(PALETTE)]
        wy = w * (y.size - 1) / max(n - 1, 1)
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.2" '
                   f'points="{_points(y, left, top, wy, h, lo, hi)}"/>')
        ly = top + 14 + 14 * i
        out.append(f'<line x1="{left + 10}" y1="{ly - 4}" x2="{left + 30}" y2="{ly - 4}" '
                   f'stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + 35}" y="{ly}" {style}>{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def parse_range(text: Optional[str], n: int) -> slice:
    """``'565:665'`` -> slice clipped to ``[0, n)``; None means everything."""
    if not text:
        return slice(0, n)
    try:
        a, b = (int(s) if s else None for s in text.split(":"))
    except ValueError:
        raise ValueError(f"plot range must look like START:END, got {text!r}") from None
    start, stop, _ = slice(a, b).indices(n)
    if stop <= start:
        raise ValueError(f"empty plot range {text!r} for {n} points")
    return slice(start, stop)
