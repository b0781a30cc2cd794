"""Minimal deterministic SVG plots.

Figures are pipeline outputs, not an interactive surface, so this sticks to
what the reports need: line/scatter series on linear or log axes, a legend,
and provenance comments embedded in the file. Output depends only on the
data passed in (no timestamps, no global state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    color: str | None = None
    markers: bool = False
    line: bool = True


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t / step) * step)
        t += step
    return ticks


def _decade_ticks(lo: float, hi: float) -> list[float]:
    ticks = []
    k = math.floor(math.log10(lo))
    while 10.0**k <= hi * 1.0000001:
        if 10.0**k >= lo * 0.9999999:
            ticks.append(10.0**k)
        k += 1
    return ticks or [lo, hi]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def render_plot(
    series: list[Series],
    xlabel: str,
    ylabel: str,
    title: str = "",
    xlog: bool = False,
    ylog: bool = False,
    width: int = 640,
    height: int = 440,
    provenance: dict | None = None,
) -> str:
    ml, mr, mt, mb = 70, 20, 34, 50
    pw, ph = width - ml - mr, height - mt - mb

    xs, ys = [], []
    for s in series:
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y)
        if xlog:
            keep &= x > 0
        if ylog:
            keep &= y > 0
        xs.append(x[keep])
        ys.append(y[keep])
    allx = np.concatenate([x for x in xs if x.size]) if any(x.size for x in xs) else np.array([0.0, 1.0])
    ally = np.concatenate([y for y in ys if y.size]) if any(y.size for y in ys) else np.array([0.0, 1.0])

    def limits(v, log):
        lo, hi = float(v.min()), float(v.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        if log:
            return lo / 1.3, hi * 1.3
        pad = 0.05 * (hi - lo)
        return lo - pad, hi + pad

    x0, x1 = limits(allx, xlog)
    y0, y1 = limits(ally, ylog)

    def sx(v):
        t = (math.log10(v) - math.log10(x0)) / (math.log10(x1) - math.log10(x0)) if xlog else (v - x0) / (x1 - x0)
        return ml + t * pw

    def sy(v):
        t = (math.log10(v) - math.log10(y0)) / (math.log10(y1) - math.log10(y0)) if ylog else (v - y0) / (y1 - y0)
        return mt + (1.0 - t) * ph

    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">')
    for key in sorted(provenance or {}):
        out.append(f"<!-- provenance {key}={provenance[key]} -->")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')

    xticks = _decade_ticks(x0, x1) if xlog else _nice_ticks(x0, x1)
    yticks = _decade_ticks(y0, y1) if ylog else _nice_ticks(y0, y1)
    for t in xticks:
        px = sx(t)
        out.append(f'<line x1="{px:.2f}" y1="{mt + ph}" x2="{px:.2f}" y2="{mt + ph + 5}" stroke="#444"/>')
        label = f"1e{round(math.log10(t))}" if xlog else _fmt(t)
        out.append(
            f'<text x="{px:.2f}" y="{mt + ph + 18}" font-family="sans-serif" font-size="11" '
            f'text-anchor="middle">{label}</text>'
        )
    for t in yticks:
        py = sy(t)
        out.append(f'<line x1="{ml - 5}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" stroke="#444"/>')
        label = f"1e{round(math.log10(t))}" if ylog else _fmt(t)
        out.append(
            f'<text x="{ml - 8}" y="{py + 4:.2f}" font-family="sans-serif" font-size="11" '
            f'text-anchor="end">{label}</text>'
        )
    out.append(
        f'<text x="{ml + pw / 2:.2f}" y="{height - 12}" font-family="sans-serif" font-size="13" '
        f'text-anchor="middle">{xlabel}</text>'
    )
    out.append(
        f'<text x="16" y="{mt + ph / 2:.2f}" font-family="sans-serif" font-size="13" '
        f'text-anchor="middle" transform="rotate(-90 16 {mt + ph / 2:.2f})">{ylabel}</text>'
    )
    if title:
        out.append(
            f'<text x="{ml + pw / 2:.2f}" y="20" font-family="sans-serif" font-size="14" '
            f'text-anchor="middle">{title}</text>'
        )

    for i, s in enumerate(series):
        color = s.color or PALETTE[i % len(PALETTE)]
        x, y = xs[i], ys[i]
        if x.size == 0:
            continue
        if s.line and x.size > 1:
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if s.markers:
            for a, b in zip(x, y):
                out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="2.5" fill="{color}"/>')
        if s.label:
            ly = mt + 16 + 16 * i
            out.append(f'<line x1="{ml + pw - 120}" y1="{ly - 4}" x2="{ml + pw - 100}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            out.append(
                f'<text x="{ml + pw - 94}" y="{ly}" font-family="sans-serif" font-size="11">{s.label}</text>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"
