"""Static SVG dose-response plots, assembled from primitive elements.

No plotting dependency: the figure is a shaded credible band, a median
curve and simple axes, written deterministically so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

__all__ = ["dose_response_svg"]

_W, _H = 640.0, 440.0
_ML, _MR, _MT, _MB = 64.0, 20.0, 24.0, 48.0


def _fmt(v: float) -> str:
    return format(float(v), ".6g")


def _ticks(lo: float, hi: float, n: int = 5):
    if hi == lo:
        return [lo]
    raw = np.linspace(lo, hi, n)
    return [float(t) for t in raw]


def dose_response_svg(doses, median, q025, q975, title: str = "dose-response") -> str:
    """Render a posterior median curve with a q2.5-q97.5 band as SVG text."""
    doses = np.asarray(doses, dtype=float)
    median = np.asarray(median, dtype=float)
    q025 = np.asarray(q025, dtype=float)
    q975 = np.asarray(q975, dtype=float)
    if not (len(doses) == len(median) == len(q025) == len(q975)) or len(doses) == 0:
        raise ValueError("doses, median, q025, q975 must be equal-length and non-empty")

    x_lo, x_hi = float(doses.min()), float(doses.max())
    y_lo = float(min(q025.min(), median.min()))
    y_hi = float(max(q975.max(), median.max()))
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    iw = _W - _ML - _MR
    ih = _H - _MT - _MB

    def sx(v):
        return _ML + (v - x_lo) / (x_hi - x_lo) * iw

    def sy(v):
        return _MT + (y_hi - v) / (y_hi - y_lo) * ih

    def pts(xs, ys):
        return " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys))

    band = pts(doses, q975) + " " + pts(doses[::-1], q025[::-1])
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_fmt(_W)}" height="{_fmt(_H)}" viewBox="0 0 {_fmt(_W)} {_fmt(_H)}">',
        f'<rect width="{_fmt(_W)}" height="{_fmt(_H)}" fill="white"/>',
        f'<text x="{_fmt(_W / 2)}" y="16" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
        f'<polygon points="{band}" fill="#9ecae1" fill-opacity="0.55" stroke="none"/>',
        f'<polyline points="{pts(doses, median)}" fill="none" stroke="#08519c" '
        f'stroke-width="1.8"/>',
    ]
    for x, y in zip(doses, median):
        parts.append(
            f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="2.6" fill="#08519c"/>'
        )
    ax = (
        f'<line x1="{_fmt(_ML)}" y1="{_fmt(_MT + ih)}" x2="{_fmt(_ML + iw)}" '
        f'y2="{_fmt(_MT + ih)}" stroke="black"/>'
        f'<line x1="{_fmt(_ML)}" y1="{_fmt(_MT)}" x2="{_fmt(_ML)}" '
        f'y2="{_fmt(_MT + ih)}" stroke="black"/>'
    )
    parts.append(ax)
    for t in _ticks(x_lo, x_hi):
        parts.append(
            f'<line x1="{_fmt(sx(t))}" y1="{_fmt(_MT + ih)}" x2="{_fmt(sx(t))}" '
            f'y2="{_fmt(_MT + ih + 5)}" stroke="black"/>'
            f'<text x="{_fmt(sx(t))}" y="{_fmt(_MT + ih + 18)}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>'
        )
    for t in _ticks(y_lo, y_hi):
        parts.append(
            f'<line x1="{_fmt(_ML - 5)}" y1="{_fmt(sy(t))}" x2="{_fmt(_ML)}" '
            f'y2="{_fmt(sy(t))}" stroke="black"/>'
            f'<text x="{_fmt(_ML - 8)}" y="{_fmt(sy(t) + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_fmt(t)}</text>'
        )
    parts.append(
        f'<text x="{_fmt(_ML + iw / 2)}" y="{_fmt(_H - 10)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">dose</text>'
        f'<text x="14" y="{_fmt(_MT + ih / 2)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 14 {_fmt(_MT + ih / 2)})">APO</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
