"""Minimal standalone SVG emitters for heatmaps and bar charts.

Output is byte-deterministic: fixed number formatting, no timestamps or ids.
"""

from __future__ import annotations

from html import escape
from pathlib import Path

import numpy as np

from .errors import RejectedInput

NEG = (33, 102, 172)  # blue
MID = (255, 255, 255)
POS = (178, 24, 43)  # red
CELL = 14


def _mix(a, b, t: float) -> tuple[int, int, int]:
    return tuple(int(round(x + (y - x) * t)) for x, y in zip(a, b))


def _hex(rgb) -> str:
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def diverging_color(value: float, vmax: float) -> str:
    """White at exactly zero, red for positive, blue for negative; symmetric in sign."""
    if value == 0 or vmax <= 0:
        return _hex(MID)
    t = min(abs(value) / vmax, 1.0)
    return _hex(_mix(MID, POS if value > 0 else NEG, t))


def sequential_color(value: float, vmax: float) -> str:
    t = 0.0 if vmax <= 0 else min(max(value / vmax, 0.0), 1.0)
    return _hex(_mix(MID, POS, t))


def _check(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise RejectedInput("cannot render non-finite values")
    return m


def heatmap_svg(matrix, row_labels, col_labels, signed: bool = True, title: str = "") -> str:
    m = _check(matrix)
    if m.ndim != 2 or m.shape != (len(row_labels), len(col_labels)):
        raise RejectedInput(f"labels {len(row_labels)}x{len(col_labels)} do not match matrix {m.shape}")
    rows, cols = m.shape
    vmax = float(np.max(np.abs(m))) if m.size else 0.0
    left, top = 48, 28 if title else 12
    width = left + cols * CELL + 90
    height = top + rows * CELL + 30
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="9">'
    ]
    if title:
        out.append(f'<text x="{left}" y="16" font-size="12">{escape(title)}</text>')
    for i in range(rows):
        y = top + i * CELL
        out.append(f'<text x="{left - 4}" y="{y + CELL - 4}" text-anchor="end">{escape(str(row_labels[i]))}</text>')
        for j in range(cols):
            v = m[i, j]
            color = diverging_color(v, vmax) if signed else sequential_color(v, vmax)
            out.append(f'<rect x="{left + j * CELL}" y="{y}" width="{CELL}" height="{CELL}" fill="{color}"/>')
    for j in range(cols):
        x = left + j * CELL + CELL / 2
        out.append(f'<text x="{x:.1f}" y="{top + rows * CELL + 12}" text-anchor="middle">{escape(str(col_labels[j]))}</text>')
    out.extend(_legend(left + cols * CELL + 20, top, rows * CELL, vmax, signed))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _legend(x: int, y: int, height: int, vmax: float, signed: bool) -> list[str]:
    steps = 20
    lo = -vmax if signed else 0.0
    parts = []
    h = height / steps
    for k in range(steps):
        # top of the bar is the maximum
        v = vmax - (vmax - lo) * (k + 0.5) / steps
        color = diverging_color(v, vmax) if signed else sequential_color(v, vmax)
        parts.append(f'<rect x="{x}" y="{y + k * h:.2f}" width="12" height="{h:.2f}" fill="{color}"/>')
    parts.append(f'<text x="{x + 16}" y="{y + 8}">{vmax:.3g}</text>')
    parts.append(f'<text x="{x + 16}" y="{y + height}">{lo:.3g}</text>')
    return parts


def bar_svg(values, labels, title: str = "") -> str:
    v = _check(values)
    if v.ndim != 1 or len(v) != len(labels):
        raise RejectedInput("bar chart needs one label per value")
    vmax = float(np.max(np.abs(v))) if v.size else 0.0
    scale = 120.0 / vmax if vmax > 0 else 0.0
    left, top, bw = 36, 28 if title else 12, 16
    base = top + 130
    width = left + len(v) * bw + 12
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{base + 40}" '
        f'font-family="sans-serif" font-size="9">'
    ]
    if title:
        out.append(f'<text x="{left}" y="16" font-size="12">{escape(title)}</text>')
    out.append(f'<line x1="{left}" y1="{base}" x2="{width - 8}" y2="{base}" stroke="#000"/>')
    out.append(f'<text x="{left - 4}" y="{base - 120}" text-anchor="end">{vmax:.3g}</text>')
    for i, val in enumerate(v):
        hgt = abs(val) * scale
        y = base - hgt if val >= 0 else base
        x = left + i * bw + 2
        out.append(f'<rect x="{x}" y="{y:.2f}" width="{bw - 4}" height="{hgt:.2f}" fill="{_hex(POS if val >= 0 else NEG)}"/>')
        out.append(
            f'<text x="{x + (bw - 4) / 2:.1f}" y="{base + 10}" text-anchor="end" '
            f'transform="rotate(-60 {x + (bw - 4) / 2:.1f} {base + 10})">{escape(str(labels[i]))}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_heatmap_svg(matrix, row_labels, col_labels, signed: bool, path) -> Path:
    from .io import write_atomic

    return write_atomic(path, heatmap_svg(matrix, row_labels, col_labels, signed))
