"""Minimal log-x line plots written as standalone SVG."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _finite(xs, ys, logy):
    out = []
    for x, y in zip(xs, ys):
        if x is None or y is None or not (x > 0 and math.isfinite(x) and math.isfinite(y)):
            continue
        if logy and y <= 0:
            continue
        out.append((math.log10(x), math.log10(y) if logy else y))
    return out


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_plot(series, title="", xlabel="t", ylabel="", logy=False, width=480, height=320):
    """Render ``series`` = [(label, xs, ys, dashed), ...] with a log10 x axis.

    Non-positive x (and non-positive y when ``logy``) and non-finite values
    are dropped.  Returns the SVG document as a string.
    """
    ml, mr, mt, mb = 64, 16, 28, 44
    pw, ph = width - ml - mr, height - mt - mb
    pts = []
    for s in series:
        label, xs, ys = s[0], s[1], s[2]
        dashed = s[3] if len(s) > 3 else False
        pts.append((label, _finite(xs, ys, logy), dashed))
    allp = [p for _, ps, _ in pts for p in ps]
    if not allp:
        raise ValueError("nothing to plot")
    x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
    y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y0, y1 = y0 - 0.5, y0 + 0.5

    def X(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for v in _ticks(x0, x1):
        out.append(f'<line x1="{X(v):.2f}" y1="{mt + ph}" x2="{X(v):.2f}" y2="{mt + ph + 4}" stroke="#444"/>')
        out.append(f'<text x="{X(v):.2f}" y="{mt + ph + 16}" text-anchor="middle">1e{v:.3g}</text>')
    for v in _ticks(y0, y1):
        lab = f"1e{v:.3g}" if logy else f"{v:.3g}"
        out.append(f'<line x1="{ml - 4}" y1="{Y(v):.2f}" x2="{ml}" y2="{Y(v):.2f}" stroke="#444"/>')
        out.append(f'<text x="{ml - 6}" y="{Y(v) + 4:.2f}" text-anchor="end">{lab}</text>')
    if title:
        out.append(f'<text x="{ml + pw / 2:.2f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
    out.append(f'<text x="{ml + pw / 2:.2f}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{mt + ph / 2:.2f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {mt + ph / 2:.2f})">{escape(ylabel)}</text>')
    for i, (label, ps, dashed) in enumerate(pts):
        if not ps:
            continue
        col = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in ps)
        dash = ' stroke-dasharray="5,3"' if dashed else ""
        out.append(f'<polyline points="{coords}" fill="none" stroke="{col}" stroke-width="1.5"{dash}/>')
        ly = mt + 12 + 14 * i
        out.append(f'<line x1="{ml + pw - 110}" y1="{ly}" x2="{ml + pw - 90}" y2="{ly}" stroke="{col}"{dash}/>')
        out.append(f'<text x="{ml + pw - 86}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plot(path, series, **kw) -> None:
    with open(path, "w") as fh:
        fh.write(line_plot(series, **kw))
