"""Dependency-light SVG plot emission for fantails and convergence traces."""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 720, 420
MARGIN = 55


def _scale(values, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(values, dtype=float) - lo) * (out_hi - out_lo) / span


def _polyline(xs, ys, stroke, width=1.5, dash=None):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<polyline points="{pts}" fill="none" stroke="{stroke}" stroke-width="{width}"{dash_attr}/>'


def _axes(title, xlabel, ylabel):
    return (
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{WIDTH - 2 * MARGIN}" height="{HEIGHT - 2 * MARGIN}" '
        'fill="none" stroke="#444"/>'
        f'<text x="{WIDTH / 2}" y="25" text-anchor="middle" font-size="16">{title}</text>'
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{xlabel}</text>'
        f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {HEIGHT / 2})">{ylabel}</text>'
    )


def _document(body):
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">\n'
        '<rect width="100%" height="100%" fill="white"/>\n' + body + "\n</svg>\n"
    )


def fantail_svg(day_grid, bands, observations=None, fit_end=None, title=""):
    """Median line, shaded inter-quartile band, dashed p05/p95, observation dots."""
    days = np.asarray(day_grid, dtype=float)
    stack = [bands[k] for k in ("p05", "p25", "p50", "p75", "p95")]
    lo = min(np.min(b) for b in stack)
    hi = max(np.max(b) for b in stack)
    if observations is not None:
        observations = np.asarray(observations, dtype=float)
        if np.any(np.isfinite(observations)):
            lo = min(lo, float(np.nanmin(observations)))
            hi = max(hi, float(np.nanmax(observations)))
    xs = _scale(days, days[0], days[-1], MARGIN, WIDTH - MARGIN)

    def ys(vals):
        return _scale(vals, lo, hi, HEIGHT - MARGIN, MARGIN)

    parts = [_axes(title, "day", "cases/day")]
    band_pts = list(zip(xs, ys(bands["p25"]))) + list(zip(xs[::-1], ys(bands["p75"])[::-1]))
    path = " ".join(f"{x:.2f},{y:.2f}" for x, y in band_pts)
    parts.append(f'<polygon points="{path}" fill="#9fdf9f" fill-opacity="0.5" stroke="none"/>')
    parts.append(_polyline(xs, ys(bands["p05"]), "#666", 1.0, dash="5,4"))
    parts.append(_polyline(xs, ys(bands["p95"]), "#666", 1.0, dash="5,4"))
    parts.append(_polyline(xs, ys(bands["p50"]), "#c0392b", 2.0))
    if observations is not None:
        for x, y, v in zip(xs, ys(observations), observations):
            if np.isfinite(v):
                parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="#2c3e50"/>')
    if fit_end is not None:
        xline = float(_scale([fit_end], days[0], days[-1], MARGIN, WIDTH - MARGIN)[0])
        parts.append(
            f'<line x1="{xline:.2f}" y1="{MARGIN}" x2="{xline:.2f}" y2="{HEIGHT - MARGIN}" '
            'stroke="#333" stroke-width="1" stroke-dasharray="2,3"/>'
        )
    return _document("\n".join(parts))


def trace_svg(iterations, values, title="", ylabel="objective"):
    it = np.asarray(iterations, dtype=float)
    vals = np.asarray(values, dtype=float)
    finite = np.isfinite(vals)
    it, vals = it[finite], vals[finite]
    xs = _scale(it, it.min(), it.max(), MARGIN, WIDTH - MARGIN)
    ys = _scale(vals, vals.min(), vals.max(), HEIGHT - MARGIN, MARGIN)
    parts = [_axes(title, "iteration", ylabel), _polyline(xs, ys, "#2980b9", 1.5)]
    return _document("\n".join(parts))
