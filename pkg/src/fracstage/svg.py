"""Minimal standalone SVG output for loss curves and error heatmaps."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["line_plot", "heatmap"]

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _doc(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>\n"])


def line_plot(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    title: str = "",
    log_y: bool = True,
    width: int = 640,
    height: int = 400,
) -> str:
    """Polylines for ``(label, x, y)`` series; non-positive values are dropped on a log axis."""
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 40
    pts = []
    for label, xs, ys in series:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if log_y:
            keep &= ys > 0
            ys = np.where(keep, np.log10(np.where(ys > 0, ys, 1.0)), 0.0)
        pts.append((label, xs[keep], ys[keep]))
    allx = np.concatenate([p[1] for p in pts]) if pts else np.zeros(0)
    ally = np.concatenate([p[2] for p in pts]) if pts else np.zeros(0)
    if allx.size == 0:
        allx, ally = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return pad_t + (1.0 - (v - y0) / (y1 - y0)) * ph

    body = [f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    if title:
        body.append(f'<text x="{width / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    for k in range(5):
        yv = y0 + (y1 - y0) * k / 4
        lab = f"1e{yv:.1f}" if log_y else f"{yv:.3g}"
        body.append(f'<text x="{pad_l - 5}" y="{sy(yv) + 4:.1f}" text-anchor="end">{lab}</text>')
        xv = x0 + (x1 - x0) * k / 4
        body.append(f'<text x="{sx(xv):.1f}" y="{height - pad_b + 15}" text-anchor="middle">{xv:.4g}</text>')
    for i, (label, xs, ys) in enumerate(pts):
        color = _PALETTE[i % len(_PALETTE)]
        if xs.size:
            path = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))
            body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{path}"/>')
        body.append(f'<text x="{pad_l + 8}" y="{pad_t + 15 + 14 * i}" fill="{color}">{escape(label)}</text>')
    return _doc(width, height, body)


def heatmap(values: np.ndarray, title: str = "", cell: int = 6, log_scale: bool = True) -> str:
    """Grey-scale image of ``values[row, col]`` with row 0 at the bottom."""
    v = np.abs(np.asarray(values, dtype=float)) if log_scale else np.asarray(values, dtype=float)
    if log_scale:
        tiny = np.min(v[v > 0]) if np.any(v > 0) else 1.0
        v = np.log10(np.maximum(v, tiny))
    lo, hi = float(np.min(v)), float(np.max(v))
    span = hi - lo if hi > lo else 1.0
    rows, cols = v.shape
    top = 24
    body = []
    if title:
        body.append(f'<text x="4" y="16">{escape(title)}</text>')
    for i in range(rows):
        y = top + (rows - 1 - i) * cell
        for j in range(cols):
            level = int(round(255 * (1.0 - (v[i, j] - lo) / span)))
            body.append(f'<rect x="{j * cell}" y="{y}" width="{cell}" height="{cell}" fill="rgb({level},{level},{level})"/>')
    lab = f"range 1e{lo:.1f} .. 1e{hi:.1f}" if log_scale else f"range {lo:.3g} .. {hi:.3g}"
    body.append(f'<text x="4" y="{top + rows * cell + 14}">{escape(lab)}</text>')
    return _doc(max(cols * cell, 200), top + rows * cell + 20, body)

