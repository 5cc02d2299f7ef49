"""Minimal SVG scatter plot with point labels."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 720, 540
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 60


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-9 * step:
        out.append(round(t, 10))
        t += step
    return out


def _fmt(v):
    return f"{v:.6g}"


def scatter_svg(points, title="", xlabel="", ylabel="", fit_line=True) -> str:
    """Render ``(label, x, y)`` triples; an OLS line is drawn when ``fit_line``."""
    pts = [(str(c), float(x), float(y)) for c, x, y in points]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="10">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    if not pts:
        parts.append(f'<text x="{W / 2}" y="{H / 2}" text-anchor="middle">no data</text></svg>')
        return "\n".join(parts) + "\n"
    xs = [p[1] for p in pts]
    ys = [p[2] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    padx = (x1 - x0) * 0.05 or 1.0
    pady = (y1 - y0) * 0.05 or 1.0
    x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return TOP + (1 - (y - y0) / (y1 - y0)) * ph

    parts.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    for t in _ticks(x0, x1):
        parts.append(f'<line x1="{sx(t):.2f}" y1="{TOP + ph}" x2="{sx(t):.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        parts.append(f'<text x="{sx(t):.2f}" y="{TOP + ph + 17}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        parts.append(f'<line x1="{LEFT - 5}" y1="{sy(t):.2f}" x2="{LEFT}" y2="{sy(t):.2f}" stroke="black"/>')
        parts.append(f'<text x="{LEFT - 8}" y="{sy(t) + 3:.2f}" text-anchor="end">{_fmt(t)}</text>')
    parts.append(f'<text x="{LEFT + pw / 2}" y="{H - 15}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    parts.append(f'<text transform="translate(18 {TOP + ph / 2}) rotate(-90)" text-anchor="middle" '
                 f'font-size="12">{escape(ylabel)}</text>')

    if fit_line and len(pts) >= 2 and max(xs) > min(xs):
        mx, my = sum(xs) / len(xs), sum(ys) / len(ys)
        b = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sum((x - mx) ** 2 for x in xs)
        a = my - b * mx
        lx0, lx1 = min(xs), max(xs)
        parts.append(f'<line x1="{sx(lx0):.2f}" y1="{sy(a + b * lx0):.2f}" x2="{sx(lx1):.2f}" '
                     f'y2="{sy(a + b * lx1):.2f}" stroke="#c33" stroke-width="1.5"/>')
    for label, x, y in pts:
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="#36c" fill-opacity="0.7"/>')
        parts.append(f'<text x="{sx(x) + 4:.2f}" y="{sy(y) - 4:.2f}" font-size="8">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
