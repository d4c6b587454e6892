"""Static SVG charts, written by hand so outputs are byte-reproducible.

Two chart types cover every diagnostic: line charts for traces and a
heatmap for probe grids.  Functions return SVG text; callers decide
where it lands.
"""

from __future__ import annotations

import numpy as np

__all__ = ["line_chart", "heatmap"]

_PALETTE = ("#1f6fb2", "#d9541e", "#2e8540", "#8031a7", "#b08c00", "#5a5a5a")

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 64, 16, 36, 48


def _f(v: float) -> str:
    return format(float(v), ".6g")


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    raw = np.linspace(lo, hi, n)
    return [float(v) for v in raw]


def line_chart(series, title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """series: list of (label, list-of-y) pairs, x implied as 0..len-1."""
    series = [(str(label), [float(v) for v in ys]) for label, ys in series]
    if not series or not any(ys for _, ys in series):
        raise ValueError("line chart needs at least one non-empty series")
    xs_max = max(len(ys) for _, ys in series) - 1
    flat = [v for _, ys in series for v in ys]
    y_lo, y_hi = min(flat), max(flat)
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB

    def px(i: float) -> float:
        return _ML + (plot_w * i / max(xs_max, 1))

    def py(v: float) -> float:
        return _MT + plot_h * (1.0 - (v - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for v in _ticks(y_lo, y_hi):
        y = py(v)
        parts.append(
            f'<line x1="{_ML}" y1="{_f(y)}" x2="{_W - _MR}" y2="{_f(y)}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_ML - 6}" y="{_f(y + 4)}" text-anchor="end">{_f(v)}</text>'
        )
    for i in _ticks(0, xs_max):
        x = px(i)
        parts.append(
            f'<text x="{_f(x)}" y="{_H - _MB + 16}" text-anchor="middle">{_f(i)}</text>'
        )
    parts.append(
        f'<rect x="{_ML}" y="{_MT}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333333"/>'
    )
    for idx, (label, ys) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        points = " ".join(f"{_f(px(i))},{_f(py(v))}" for i, v in enumerate(ys))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        ly = _MT + 16 + 16 * idx
        parts.append(
            f'<line x1="{_W - _MR - 120}" y1="{ly - 4}" x2="{_W - _MR - 100}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{_W - _MR - 94}" y="{ly}">{label}</text>')
    parts.append(
        f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{_H / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_H / 2})">{ylabel}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _ramp(t: float) -> str:
    # pale yellow to deep blue
    t = min(max(t, 0.0), 1.0)
    r = round(253 + (33 - 253) * t)
    g = round(231 + (102 - 231) * t)
    b = round(146 + (172 - 146) * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(matrix, row_labels, col_labels, title: str = "") -> str:
    """Cell (i, j) colored by value; rows top-down, columns left-right."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"heatmap needs a non-empty 2-D matrix, got shape {m.shape}")
    rows, cols = m.shape
    if len(row_labels) != rows or len(col_labels) != cols:
        raise ValueError("label counts must match the matrix")
    lo, hi = float(m.min()), float(m.max())
    span = hi - lo if hi > lo else 1.0
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB
    cw, ch = plot_w / cols, plot_h / rows
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for i in range(rows):
        for j in range(cols):
            x = _ML + j * cw
            y = _MT + i * ch
            color = _ramp((m[i, j] - lo) / span)
            parts.append(
                f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cw)}" height="{_f(ch)}" '
                f'fill="{color}" stroke="white" stroke-width="0.5"/>'
            )
            parts.append(
                f'<text x="{_f(x + cw / 2)}" y="{_f(y + ch / 2 + 4)}" '
                f'text-anchor="middle">{_f(m[i, j])}</text>'
            )
    for i, label in enumerate(row_labels):
        parts.append(
            f'<text x="{_ML - 6}" y="{_f(_MT + (i + 0.5) * ch + 4)}" '
            f'text-anchor="end">{label}</text>'
        )
    for j, label in enumerate(col_labels):
        parts.append(
            f'<text x="{_f(_ML + (j + 0.5) * cw)}" y="{_H - _MB + 16}" '
            f'text-anchor="middle">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
