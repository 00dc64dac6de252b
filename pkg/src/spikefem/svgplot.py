"""Minimal self-contained SVG line plot for sweep summaries (log-scale y).

Hand-rolled on purpose: the output must be a plain static file with no
plotting-stack dependency, and byte-identical across runs for the same data.
"""

from __future__ import annotations

import math
from pathlib import Path

from .experiments import SweepResult

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 20, 30, 55


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def write_summary_svg(results: list[SweepResult], path: str | Path,
                      title: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    points = []  # (x=p, mean, sem) per curve
    for res in results:
        curve = []
        for p_index, p in enumerate(res.p_values):
            mean = res.mean_error(p_index)
            if not math.isnan(mean):
                curve.append((p, max(mean, 1e-12), res.sem(p_index)))
        points.append(curve)

    xs = [p for curve in points for p, _, _ in curve] or [0.0, 1.0]
    ys = [m for curve in points for _, m, _ in curve] or [1e-3, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    y_lo = 10.0 ** math.floor(math.log10(min(ys)))
    y_hi = 10.0 ** math.ceil(math.log10(max(ys)) + 1e-12)
    if y_hi <= y_lo:
        y_hi = y_lo * 10.0

    def sx(p: float) -> float:
        return _ML + (p - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def sy(val: float) -> float:
        frac = (math.log10(val) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo))
        return _H - _MB - frac * (_H - _MT - _MB)

    kind = results[0].fault_kind if results else ""
    title = title or f"relative error vs {kind} probability"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>',
    ]

    # y decade ticks and gridlines
    dec = math.log10(y_lo)
    while dec <= math.log10(y_hi) + 1e-9:
        val = 10.0 ** dec
        y = sy(val)
        parts.append(f'<line x1="{_ML}" y1="{_fmt(y)}" x2="{_W - _MR}" '
                     f'y2="{_fmt(y)}" stroke="#dddddd"/>')
        parts.append(f'<text x="{_ML - 6}" y="{_fmt(y + 4)}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">1e{int(round(dec))}</text>')
        dec += 1.0
    # x ticks at the data points of the first curve
    for p in sorted({p for curve in points for p, _, _ in curve}):
        x = sx(p)
        parts.append(f'<line x1="{_fmt(x)}" y1="{_H - _MB}" x2="{_fmt(x)}" '
                     f'y2="{_H - _MB + 5}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(x)}" y="{_H - _MB + 20}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{p:g}</text>')
    parts.append(f'<text x="{_W / 2:.0f}" y="{_H - 12}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12">fault probability p</text>')
    parts.append(f'<text x="16" y="{_H / 2:.0f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12" '
                 f'transform="rotate(-90 16 {_H / 2:.0f})">mean relative error</text>')

    for ci, (res, curve) in enumerate(zip(results, points)):
        color = _COLORS[ci % len(_COLORS)]
        pts = " ".join(f"{_fmt(sx(p))},{_fmt(sy(m))}" for p, m, _ in curve)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        for p, m, sem in curve:
            x, y = sx(p), sy(m)
            parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" '
                         f'fill="{color}"/>')
            if sem > 0.0:
                y1, y2 = sy(m + sem), sy(max(m - sem, 1e-12))
                parts.append(f'<line x1="{_fmt(x)}" y1="{_fmt(y1)}" x2="{_fmt(x)}" '
                             f'y2="{_fmt(y2)}" stroke="{color}"/>')
        ly = _MT + 18 + 16 * ci
        parts.append(f'<line x1="{_W - 150}" y1="{ly}" x2="{_W - 125}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_W - 118}" y="{ly + 4}" font-family="sans-serif" '
                     f'font-size="11">npm={res.npm}</text>')

    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
    return path
