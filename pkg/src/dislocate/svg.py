"""Minimal SVG writers for landscapes and log-log plots (no plotting dependency)."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np


def _num(x: float) -> str:
    return repr(round(float(x), 6))


def ramp(t: float) -> str:
    """Linear blue (t=0) to red (t=1) ramp."""
    t = min(max(t, 0.0), 1.0)
    r = int(round(255 * t))
    b = int(round(255 * (1 - t)))
    return f"#{r:02x}00{b:02x}"


def polar_heatmap(path, radii: Sequence[float], angles: Sequence[float], values: np.ndarray,
                  title: str = "", size: int = 520) -> None:
    """Heatmap on a polar grid; cell (i, j) covers [r_i, r_{i+1}] x [t_j, t_{j+1}]."""
    radii = np.asarray(radii, dtype=float)
    angles = np.asarray(angles, dtype=float)
    vals = np.asarray(values, dtype=float)
    fin = vals[np.isfinite(vals)]
    lo, hi = (float(fin.min()), float(fin.max())) if fin.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    dr = radii[1] - radii[0] if len(radii) > 1 else 1.0
    dt = 2 * math.pi / len(angles)
    c = size / 2
    scale = (size / 2 - 20) / (radii[-1] + dr)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
           f"<!-- color ramp: linear from blue (min {lo!r}) to red (max {hi!r}); white cells are +inf -->",
           f"<title>{title}</title>"]
    for i, r0 in enumerate(radii):
        r1 = r0 + dr
        for j, t0 in enumerate(angles):
            v = vals[i, j]
            color = "#ffffff" if not math.isfinite(v) else ramp((v - lo) / span)
            t1 = t0 - 0.5 * dt, t0 + 0.5 * dt
            rr0, rr1 = max(r0 - 0.5 * dr, 0.0), r0 + 0.5 * dr
            pts = [(rr0, t1[0]), (rr1, t1[0]), (rr1, t1[1]), (rr0, t1[1])]
            poly = " ".join(f"{_num(c + scale * r * math.cos(t))},{_num(c - scale * r * math.sin(t))}" for r, t in pts)
            out.append(f'<polygon points="{poly}" fill="{color}" stroke="none"/>')
    rad = scale * (radii[-1] + 0.5 * dr)
    out.append(f'<circle cx="{_num(c)}" cy="{_num(c)}" r="{_num(rad)}" fill="none" stroke="black"/>')
    out.append(f'<line x1="{_num(c - rad)}" y1="{_num(c)}" x2="{_num(c + rad)}" y2="{_num(c)}" stroke="black" stroke-width="0.5"/>')
    out.append(f'<line x1="{_num(c)}" y1="{_num(c - rad)}" x2="{_num(c)}" y2="{_num(c + rad)}" stroke="black" stroke-width="0.5"/>')
    out.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def loglog_plot(path, x: Sequence[float], y: Sequence[float], slope: float, fit_x: Sequence[float],
                title: str, ylabel: str, size=(520, 400)) -> None:
    """Scatter of y against x on log axes with the fitted line over ``fit_x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    x, y = x[keep], y[keep]
    W, H = size
    m = 50
    lx, ly = np.log10(x), np.log10(y)
    x0, x1 = float(lx.min()), float(lx.max())
    y0, y1 = float(ly.min()), float(ly.max())
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def px(v):
        return m + (W - 2 * m) * (v - x0) / (x1 - x0)

    def py(v):
        return H - m - (H - 2 * m) * (v - y0) / (y1 - y0)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           f"<!-- log-log plot; fitted slope {slope!r} -->",
           f"<title>{title}</title>",
           f'<rect x="{m}" y="{m}" width="{W - 2 * m}" height="{H - 2 * m}" fill="none" stroke="black"/>',
           f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="12">n (log scale)</text>',
           f'<text x="14" y="{H / 2}" font-size="12" transform="rotate(-90 14 {H / 2})" text-anchor="middle">{ylabel}</text>',
           f'<text x="{m}" y="{m - 10}" font-size="12">{title}; slope {slope:.4f}</text>']
    for a, b in zip(lx, ly):
        out.append(f'<circle cx="{_num(px(a))}" cy="{_num(py(b))}" r="2.5" fill="#1f4fbf"/>')
    fx = np.log10(np.asarray(fit_x, dtype=float))
    if len(fx) > 1 and math.isfinite(slope):
        sel = np.isin(x, np.asarray(fit_x, dtype=float))
        icpt = float(np.mean(ly[sel] - slope * lx[sel])) if np.any(sel) else 0.0
        a, b = float(fx.min()), float(fx.max())
        out.append(f'<line x1="{_num(px(a))}" y1="{_num(py(icpt + slope * a))}" x2="{_num(px(b))}" '
                   f'y2="{_num(py(icpt + slope * b))}" stroke="#c0392b" stroke-width="1.5"/>')
    out.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
