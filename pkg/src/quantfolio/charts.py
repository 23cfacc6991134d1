"""Static SVG line charts for cumulative-return comparisons.

Hand-rolled rather than delegated to a plotting library so the output is
deterministic and minimal: exactly one ``<polyline>`` per plotted
strategy, ``<line>`` elements for axes and ticks, ``<text>`` for labels
and the legend. Failed (NaN) strategies are skipped.
"""

import numpy as np

from .months import format_month

_WIDTH, _HEIGHT = 960, 540
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 170, 50, 55

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2")


def _ticks(lo: float, hi: float, count: int = 6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(count - 1, 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if step >= raw:
            break
    first = np.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-12 * max(1.0, abs(hi)):
        ticks.append(0.0 if abs(v) < step * 1e-9 else v)
        v += step
    return ticks


def render_cumret_svg(path, title: str, dates, series: dict):
    """Write one chart; ``series`` maps strategy name to a cumulative
    return array (or None for a failed strategy)."""
    plotted = {name: vals for name, vals in series.items()
               if vals is not None and len(vals)}
    x0, x1 = _MARGIN_L, _WIDTH - _MARGIN_R
    y0, y1 = _HEIGHT - _MARGIN_B, _MARGIN_T

    lo = min((float(np.min(v)) for v in plotted.values()), default=0.0)
    hi = max((float(np.max(v)) for v in plotted.values()), default=1.0)
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    pad = 0.05 * (hi - lo or 1.0)
    lo, hi = lo - pad, hi + pad
    n = max(len(dates), 2)

    def sx(i):
        return x0 + (x1 - x0) * i / (n - 1)

    def sy(v):
        return y0 + (y1 - y0) * (v - lo) / (hi - lo)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH // 2}" y="28" text-anchor="middle" '
        f'font-family="sans-serif" font-size="18">{title}</text>',
        # axes
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for tick in _ticks(lo, hi):
        y = sy(tick)
        parts.append(f'<line x1="{x0 - 5}" y1="{y:.2f}" x2="{x0}" '
                     f'y2="{y:.2f}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 9}" y="{y + 4:.2f}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="12">{tick * 100:.0f}%</text>')
    n_xticks = min(8, n)
    for j in range(n_xticks):
        i = round(j * (n - 1) / max(n_xticks - 1, 1))
        x = sx(i)
        parts.append(f'<line x1="{x:.2f}" y1="{y0}" x2="{x:.2f}" '
                     f'y2="{y0 + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{y0 + 20}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="12">{format_month(dates[i])}</text>')
    parts.append(f'<text x="{(x0 + x1) // 2}" y="{_HEIGHT - 12}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="13">Month</text>')
    parts.append(f'<text x="18" y="{(y0 + y1) // 2}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="13" '
                 f'transform="rotate(-90 18 {(y0 + y1) // 2})">'
                 'Cumulative excess return</text>')

    legend_y = _MARGIN_T + 10
    for idx, (name, vals) in enumerate(plotted.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{sx(i):.2f},{sy(float(v)):.2f}"
                       for i, v in enumerate(vals))
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="1.6" points="{pts}"/>')
        ly = legend_y + 22 * idx
        parts.append(f'<rect x="{x1 + 14}" y="{ly - 10}" width="14" '
                     f'height="14" fill="{color}"/>')
        parts.append(f'<text x="{x1 + 34}" y="{ly + 2}" '
                     f'font-family="sans-serif" font-size="13">'
                     f'{name}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
