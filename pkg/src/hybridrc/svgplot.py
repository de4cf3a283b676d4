"""Minimal SVG line/interval plots, dependency free.

Enough plotting for the emitted diagnostics: multi-series line charts
(Bode magnitudes, step responses, prediction traces) and horizontal
interval charts (case-robustness rankings). Output is deterministic.
"""

from __future__ import annotations

import math

from .io import atomic_write_text

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f")

W, H = 860, 480
ML, MR, MT, MB = 70, 20, 36, 48


def _ticks(lo: float, hi: float, n: int = 6):
    if not math.isfinite(lo) or not math.isfinite(hi) or hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * abs(hi):
        out.append(round(v, 12))
        v += step
    return out or [lo]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def line_plot(path, series, title="", xlabel="", ylabel="", logx=False):
    """Write a line chart; series is a list of (label, x, y)."""
    xs = [float(x) for _, xv, _ in series for x in xv]
    ys = [float(y) for _, _, yv in series for y in yv]
    if not xs:
        raise ValueError("nothing to plot")
    fx = (lambda v: math.log10(v)) if logx else (lambda v: v)
    x_lo, x_hi = min(fx(x) for x in xs if not logx or x > 0), max(
        fx(x) for x in xs if not logx or x > 0
    )
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(v):
        return ML + (fx(v) - x_lo) / (x_hi - x_lo) * (W - ML - MR)

    def py(v):
        return H - MB - (v - y_lo) / (y_hi - y_lo) * (H - MT - MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W/2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{W/2}" y="{H-10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{H/2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {H/2})">{ylabel}</text>',
        f'<rect x="{ML}" y="{MT}" width="{W-ML-MR}" height="{H-MT-MB}" '
        f'fill="none" stroke="#444"/>',
    ]
    for tv in _ticks(y_lo, y_hi):
        y = py(tv)
        parts.append(f'<line x1="{ML}" y1="{y:.2f}" x2="{W-MR}" y2="{y:.2f}" '
                     f'stroke="#ddd"/>')
        parts.append(f'<text x="{ML-6}" y="{y+4:.2f}" text-anchor="end">{_fmt(tv)}</text>')
    for tv in _ticks(x_lo, x_hi):
        x = ML + (tv - x_lo) / (x_hi - x_lo) * (W - ML - MR)
        label = _fmt(10 ** tv if logx else tv)
        parts.append(f'<line x1="{x:.2f}" y1="{MT}" x2="{x:.2f}" y2="{H-MB}" '
                     f'stroke="#eee"/>')
        parts.append(f'<text x="{x:.2f}" y="{H-MB+16}" text-anchor="middle">{label}</text>')
    for i, (label, xv, yv) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(
            f"{px(float(x)):.2f},{py(float(y)):.2f}"
            for x, y in zip(xv, yv)
            if (not logx or float(x) > 0) and math.isfinite(float(y))
        )
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.6"/>')
        ly = MT + 16 + 16 * i
        parts.append(f'<line x1="{W-MR-150}" y1="{ly}" x2="{W-MR-120}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{W-MR-114}" y="{ly+4}">{label}</text>')
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts))


def interval_plot(path, rows, title="", xlabel=""):
    """Horizontal interval chart; rows are dicts with keys
    label, lo, mid, hi and optional flag (highlighted when true)."""
    if not rows:
        raise ValueError("nothing to plot")
    height = MT + MB + 24 * len(rows)
    x_lo = min(r["lo"] for r in rows)
    x_hi = max(r["hi"] for r in rows)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0

    def px(v):
        return ML + (v - x_lo) / (x_hi - x_lo) * (W - ML - MR)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" '
        f'viewBox="0 0 {W} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{height}" fill="white"/>',
        f'<text x="{W/2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{W/2}" y="{height-10}" text-anchor="middle">{xlabel}</text>',
    ]
    for tv in _ticks(x_lo, x_hi):
        x = px(tv)
        parts.append(f'<line x1="{x:.2f}" y1="{MT}" x2="{x:.2f}" y2="{height-MB}" '
                     f'stroke="#eee"/>')
        parts.append(f'<text x="{x:.2f}" y="{height-MB+16}" text-anchor="middle">{_fmt(tv)}</text>')
    for i, r in enumerate(rows):
        y = MT + 24 * i + 12
        color = "#1f77b4" if r.get("flag") else "#999999"
        parts.append(f'<line x1="{px(r["lo"]):.2f}" y1="{y}" x2="{px(r["hi"]):.2f}" '
                     f'y2="{y}" stroke="{color}" stroke-width="3"/>')
        parts.append(f'<circle cx="{px(r["mid"]):.2f}" cy="{y}" r="4" fill="{color}"/>')
        parts.append(f'<text x="{ML-6}" y="{y+4}" text-anchor="end">{r["label"]}</text>')
    parts.append("</svg>")
    atomic_write_text(path, "\n".join(parts))
