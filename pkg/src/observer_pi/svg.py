"""Minimal self-contained SVG line charts.

CSV files are the canonical artifacts; these charts are derived views with
no external plotting dependency.  Output is deterministic for fixed input.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH = 720
HEIGHT = 480
MARGIN_L = 70
MARGIN_R = 20
MARGIN_T = 40
MARGIN_B = 55

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


@dataclass(frozen=True)
class LineSeries:
    """One polyline: x/y data plus presentation attributes."""

    x: np.ndarray
    y: np.ndarray
    label: str
    color: str | None = None
    dashed: bool = False


def _linear_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min(s for s in (1.0, 2.0, 2.5, 5.0, 10.0) if s * mag >= raw) * mag
    first = np.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else float(t))
        t += step
    return ticks


def _log_ticks(lo: float, hi: float) -> list[float]:
    lo_e = int(np.floor(np.log10(lo)))
    hi_e = int(np.ceil(np.log10(hi)))
    return [10.0**e for e in range(lo_e, hi_e + 1)]


def _fmt(v: float) -> str:
    if v != 0.0 and (abs(v) >= 1e4 or abs(v) < 1e-3):
        return f"{v:.0e}"
    return f"{v:g}"


def write_line_chart(
    path: str | Path,
    series: list[LineSeries],
    *,
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    log_y: bool = False,
) -> None:
    """Render the series into a standalone SVG file."""
    if not series:
        raise ValueError("no series to plot")
    xs = np.concatenate([np.asarray(s.x, dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s.y, dtype=float) for s in series])
    if log_y:
        pos = ys[ys > 0]
        # floor keeps exact zeros (converged runs) on the chart
        floor = float(pos.min()) if pos.size else 1e-16
        ys = np.maximum(ys, floor)

    x_lo, x_hi = float(xs.min()), float(xs.max())
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if log_y:
        y_lo, y_hi = float(ys.min()), float(ys.max())
        if y_hi == y_lo:
            y_hi = y_lo * 10.0
        y_ticks = _log_ticks(y_lo, y_hi)
        y_lo, y_hi = y_ticks[0], y_ticks[-1]

        def sy(v: float) -> float:
            v = max(v, y_lo)
            frac = (np.log10(v) - np.log10(y_lo)) / (np.log10(y_hi) - np.log10(y_lo))
            return MARGIN_T + (1.0 - frac) * (HEIGHT - MARGIN_T - MARGIN_B)
    else:
        y_lo, y_hi = float(ys.min()), float(ys.max())
        if y_hi == y_lo:
            y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
        pad = 0.05 * (y_hi - y_lo)
        y_lo, y_hi = y_lo - pad, y_hi + pad
        y_ticks = _linear_ticks(y_lo, y_hi)

        def sy(v: float) -> float:
            frac = (v - y_lo) / (y_hi - y_lo)
            return MARGIN_T + (1.0 - frac) * (HEIGHT - MARGIN_T - MARGIN_B)

    x_ticks = _linear_ticks(x_lo, x_hi)

    def sx(v: float) -> float:
        return MARGIN_L + (v - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_L - MARGIN_R)

    out: list[str] = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    out.append(f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    if title:
        out.append(
            f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{escape(title)}</text>'
        )
    # frame
    x0p, x1p = MARGIN_L, WIDTH - MARGIN_R
    y0p, y1p = HEIGHT - MARGIN_B, MARGIN_T
    out.append(
        f'<rect x="{x0p}" y="{y1p}" width="{x1p - x0p}" height="{y0p - y1p}" '
        f'fill="none" stroke="black" stroke-width="1"/>'
    )
    # grid + tick labels
    for t in x_ticks:
        px = sx(t)
        out.append(
            f'<line x1="{px:.2f}" y1="{y0p}" x2="{px:.2f}" y2="{y1p}" '
            f'stroke="#dddddd" stroke-width="0.7"/>'
        )
        out.append(
            f'<text x="{px:.2f}" y="{y0p + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>'
        )
    for t in y_ticks:
        py = sy(t)
        out.append(
            f'<line x1="{x0p}" y1="{py:.2f}" x2="{x1p}" y2="{py:.2f}" '
            f'stroke="#dddddd" stroke-width="0.7"/>'
        )
        out.append(
            f'<text x="{x0p - 6}" y="{py + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>'
        )
    if x_label:
        out.append(
            f'<text x="{(x0p + x1p) / 2:.1f}" y="{HEIGHT - 12}" '
            f'text-anchor="middle" font-family="sans-serif" font-size="13">'
            f"{escape(x_label)}</text>"
        )
    if y_label:
        cx, cy = 18, (y0p + y1p) / 2
        out.append(
            f'<text x="{cx}" y="{cy:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13" '
            f'transform="rotate(-90 {cx} {cy:.1f})">{escape(y_label)}</text>'
        )
    # series
    for i, s in enumerate(series):
        color = s.color or PALETTE[i % len(PALETTE)]
        xv = np.asarray(s.x, dtype=float)
        yv = np.asarray(s.y, dtype=float)
        pts = " ".join(
            f"{sx(px):.2f},{sy(py):.2f}"
            for px, py in zip(xv, yv)
            if np.isfinite(px) and np.isfinite(py)
        )
        dash = ' stroke-dasharray="6 4"' if s.dashed else ""
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.6"{dash}/>'
        )
    # legend
    ly = MARGIN_T + 14
    for i, s in enumerate(series):
        if not s.label:
            continue
        color = s.color or PALETTE[i % len(PALETTE)]
        dash = ' stroke-dasharray="6 4"' if s.dashed else ""
        out.append(
            f'<line x1="{x1p - 150}" y1="{ly}" x2="{x1p - 120}" y2="{ly}" '
            f'stroke="{color}" stroke-width="1.6"{dash}/>'
        )
        out.append(
            f'<text x="{x1p - 114}" y="{ly + 4}" font-family="sans-serif" '
            f'font-size="12">{escape(s.label)}</text>'
        )
        ly += 18
    out.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
