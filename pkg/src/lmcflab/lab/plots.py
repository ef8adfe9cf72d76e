"""Minimal SVG line charts (time series and log-log fits)."""

from __future__ import annotations

import math
from html import escape
from typing import Dict, Optional, Sequence

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
W, H = 640, 400
ML, MR, MT, MB = 70, 20, 40, 50


def _ticks(lo: float, hi: float, log: bool, n: int = 5):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        step = max(1, (b - a) // n)
        return [float(k) for k in range(a, b + 1, step)]
    return list(np.linspace(lo, hi, n))


def _fmt(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(v))}"
    return f"{v:.3g}"


def line_chart(series: Dict[str, tuple], path, title: str = "", xlabel: str = "t",
               ylabel: str = "", logx: bool = False, logy: bool = False,
               header: Optional[Dict[str, str]] = None) -> None:
    """Write ``{label: (x, y)}`` as an SVG line chart.

    Non-finite points (and non-positive ones on log axes) are skipped.
    ``header`` entries are stored as an XML comment (config hash, version).
    """
    clean = {}
    for label, (x, y) in series.items():
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if logx:
            ok &= x > 0
        if logy:
            ok &= y > 0
        x, y = x[ok], y[ok]
        if logx:
            x = np.log10(x)
        if logy:
            y = np.log10(y)
        clean[label] = (x, y)
    allx = np.concatenate([v[0] for v in clean.values()] + [np.zeros(0)])
    ally = np.concatenate([v[1] for v in clean.values()] + [np.zeros(0)])
    if len(allx) == 0:
        allx, ally = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        pad = 0.5 if y0 == 0 else 0.05 * abs(y0)
        y0, y1 = y0 - pad, y1 + pad

    def px(v):
        return ML + (v - x0) / (x1 - x0) * (W - ML - MR)

    def py(v):
        return H - MB - (v - y0) / (y1 - y0) * (H - MT - MB)

    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    if header:
        out.append("<!-- " + " ".join(f"{k}={escape(str(v))}" for k, v in header.items()) + " -->")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
               f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">')
    out.append(f'<rect width="{W}" height="{H}" fill="white"/>')
    out.append(f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" '
               'fill="none" stroke="#444"/>')
    for v in _ticks(x0, x1, logx):
        if x0 - 1e-12 <= v <= x1 + 1e-12:
            X = px(v)
            out.append(f'<line x1="{X:.1f}" y1="{H - MB}" x2="{X:.1f}" y2="{H - MB + 5}" stroke="#444"/>')
            out.append(f'<text x="{X:.1f}" y="{H - MB + 18}" text-anchor="middle">{_fmt(v, logx)}</text>')
    for v in _ticks(y0, y1, logy):
        if y0 - 1e-12 <= v <= y1 + 1e-12:
            Y = py(v)
            out.append(f'<line x1="{ML - 5}" y1="{Y:.1f}" x2="{ML}" y2="{Y:.1f}" stroke="#444"/>')
            out.append(f'<text x="{ML - 8}" y="{Y + 4:.1f}" text-anchor="end">{_fmt(v, logy)}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{H / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {H / 2})">{escape(ylabel)}</text>')
    for i, (label, (x, y)) in enumerate(clean.items()):
        col = COLORS[i % len(COLORS)]
        if len(x):
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
            out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
            for a, b in zip(x, y):
                out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2" fill="{col}"/>')
        out.append(f'<text x="{ML + 10}" y="{MT + 16 + 15 * i}" fill="{col}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def loglog_fit_chart(x: Sequence[float], y: Sequence[float], path, slope: float, intercept: float,
                     title: str = "", xlabel: str = "", ylabel: str = "",
                     header: Optional[Dict[str, str]] = None) -> None:
    """Data plus the fitted power law ``y = 10^intercept x^slope`` on log-log axes."""
    x = np.asarray(x, dtype=float)
    fit = 10 ** intercept * x ** slope
    line_chart({"data": (x, np.abs(np.asarray(y, dtype=float))),
                f"fit slope {slope:.3f}": (x, fit)}, path, title, xlabel, ylabel,
               logx=True, logy=True, header=header)
