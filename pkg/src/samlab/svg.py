"""Dependency-free SVG line charts and heatmaps.

Output is plain markup with fixed-precision coordinates, so the same data
always yields the same bytes.
"""

from __future__ import annotations

import math
from html import escape
from typing import Mapping, Sequence

WIDTH, HEIGHT = 480, 360
MARGIN = 56
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


def _num(x: float) -> str:
    return f"{x:.2f}"


def _finite(values) -> list[float]:
    return [float(v) for v in values if v is not None and math.isfinite(float(v))]


def _span(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = (min(values), max(values)) if values else (0.0, 1.0)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _frame(title: str, body: list[str], xlabel: str = "", ylabel: str = "") -> str:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        *body,
    ]
    if xlabel:
        parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        parts.append(f'<text x="14" y="{HEIGHT / 2}" text-anchor="middle" '
                     f'transform="rotate(-90 14 {HEIGHT / 2})">{escape(ylabel)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def line_chart(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
               xlabel: str = "", ylabel: str = "") -> str:
    xs_all = _finite(x for xs, _ in series.values() for x in xs)
    ys_all = _finite(y for _, ys in series.values() for y in ys)
    x0, x1 = _span(xs_all)
    y0, y1 = _span(ys_all)
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(x):
        return MARGIN + (x - x0) / (x1 - x0) * pw

    def py(y):
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph

    body = [
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle">{x0:.3g}</text>',
        f'<text x="{MARGIN + pw}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle">{x1:.3g}</text>',
        f'<text x="{MARGIN - 4}" y="{HEIGHT - MARGIN}" text-anchor="end">{y0:.4g}</text>',
        f'<text x="{MARGIN - 4}" y="{MARGIN + 4}" text-anchor="end">{y1:.4g}</text>',
    ]
    for k, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(
            f"{_num(px(float(x)))},{_num(py(float(y)))}"
            for x, y in zip(xs, ys)
            if y is not None and math.isfinite(float(y))
        )
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        body.append(f'<text x="{MARGIN + pw + 4 - 60}" y="{MARGIN + 14 + 13 * k}" fill="{color}">{escape(label)}</text>')
    return _frame(title, body, xlabel, ylabel)


def _color(t: float) -> str:
    # white -> dark blue ramp
    t = min(1.0, max(0.0, t))
    r = int(round(255 - 220 * t))
    g = int(round(255 - 180 * t))
    b = int(round(255 - 60 * t))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(matrix: Sequence[Sequence[float | None]], row_labels: Sequence[str], col_labels: Sequence[str],
            title: str = "", annotate: bool = True) -> str:
    vals = _finite(v for row in matrix for v in row)
    lo, hi = _span(vals)
    n_rows, n_cols = len(matrix), len(matrix[0]) if matrix else 0
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    cw, ch = pw / max(n_cols, 1), ph / max(n_rows, 1)
    body = []
    for i, row in enumerate(matrix):
        for j, v in enumerate(row):
            x, y = MARGIN + j * cw, MARGIN + i * ch
            ok = v is not None and math.isfinite(float(v))
            fill = _color((float(v) - lo) / (hi - lo)) if ok else "#cccccc"
            body.append(f'<rect x="{_num(x)}" y="{_num(y)}" width="{_num(cw)}" height="{_num(ch)}" fill="{fill}"/>')
            if annotate and n_rows * n_cols <= 100:
                text = f"{float(v):.2f}" if ok else "-"
                body.append(f'<text x="{_num(x + cw / 2)}" y="{_num(y + ch / 2 + 4)}" text-anchor="middle">{text}</text>')
    if n_rows <= 20:
        for i, lab in enumerate(row_labels):
            body.append(f'<text x="{MARGIN - 4}" y="{_num(MARGIN + (i + 0.5) * ch + 4)}" text-anchor="end">{escape(str(lab))}</text>')
    if n_cols <= 20:
        for j, lab in enumerate(col_labels):
            body.append(f'<text x="{_num(MARGIN + (j + 0.5) * cw)}" y="{MARGIN - 4}" text-anchor="middle">{escape(str(lab))}</text>')
    return _frame(title, body)


def bar_chart(labels: Sequence[str], values: Sequence[float], title: str = "", ylabel: str = "") -> str:
    vals = _finite(values)
    lo, hi = _span([0.0] + vals)
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    bw = pw / max(len(values), 1)

    def py(y):
        return HEIGHT - MARGIN - (y - lo) / (hi - lo) * ph

    body = [f'<line x1="{MARGIN}" y1="{_num(py(0.0))}" x2="{MARGIN + pw}" y2="{_num(py(0.0))}" stroke="#444"/>']
    for k, (lab, v) in enumerate(zip(labels, values)):
        top, base = py(max(v, 0.0)), py(min(v, 0.0))
        x = MARGIN + k * bw + 0.1 * bw
        body.append(f'<rect x="{_num(x)}" y="{_num(top)}" width="{_num(0.8 * bw)}" height="{_num(base - top)}" fill="{PALETTE[0]}"/>')
        body.append(f'<text x="{_num(x + 0.4 * bw)}" y="{HEIGHT - MARGIN + 14}" text-anchor="middle">{escape(str(lab))}</text>')
    return _frame(title, body, ylabel=ylabel)
