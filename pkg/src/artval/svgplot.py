"""Minimal deterministic SVG emission: lines, bars, scatters, histograms.

Hand-rolled on purpose; no timestamps or randomness end up in the output,
so identical inputs give byte-identical files.
"""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = 56
PALETTE = ["#2b6cb0", "#c05621", "#2f855a", "#9b2c2c", "#6b46c1", "#975a16"]


def _f(x) -> str:
    return f"{float(x):.2f}"


def _axes(title, x_label, y_label):
    return [
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH/2}" y="24" text-anchor="middle" font-size="15" font-family="sans-serif">{title}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT-MARGIN}" x2="{WIDTH-MARGIN}" y2="{HEIGHT-MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT-MARGIN}" stroke="black"/>',
        f'<text x="{WIDTH/2}" y="{HEIGHT-12}" text-anchor="middle" font-size="12" font-family="sans-serif">{x_label}</text>',
        f'<text x="16" y="{HEIGHT/2}" text-anchor="middle" font-size="12" font-family="sans-serif" transform="rotate(-90 16 {HEIGHT/2})">{y_label}</text>',
    ]


def _scale(vals, lo_pix, hi_pix):
    vals = np.asarray(vals, dtype=float)
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        hi = lo + 1.0
    span = hi - lo

    def to_pix(v):
        return lo_pix + (np.asarray(v, dtype=float) - lo) / span * (hi_pix - lo_pix)

    return to_pix, lo, hi


def _document(parts) -> str:
    body = "\n".join(parts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n{body}\n</svg>\n'
    )


def line_chart(series, title="", x_label="", y_label="") -> str:
    """series: list of (label, xs, ys)."""
    parts = _axes(title, x_label, y_label)
    all_x = np.concatenate([np.asarray(xs, float) for _, xs, _ in series])
    all_y = np.concatenate([np.asarray(ys, float) for _, _, ys in series])
    sx, x_lo, x_hi = _scale(all_x, MARGIN, WIDTH - MARGIN)
    sy, y_lo, y_hi = _scale(all_y, HEIGHT - MARGIN, MARGIN)
    for k, (label, xs, ys) in enumerate(series):
        pts = " ".join(f"{_f(sx(x))},{_f(sy(y))}" for x, y in zip(xs, ys))
        color = PALETTE[k % len(PALETTE)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{WIDTH-MARGIN+4}" y="{MARGIN + 16*k}" font-size="11" fill="{color}" '
            f'font-family="sans-serif" text-anchor="end">{label}</text>'
        )
    parts.append(_tick_labels(x_lo, x_hi, y_lo, y_hi))
    return _document(parts)


def _tick_labels(x_lo, x_hi, y_lo, y_hi) -> str:
    return (
        f'<text x="{MARGIN}" y="{HEIGHT-MARGIN+16}" font-size="10" font-family="sans-serif">{x_lo:.3g}</text>'
        f'<text x="{WIDTH-MARGIN}" y="{HEIGHT-MARGIN+16}" font-size="10" text-anchor="end" font-family="sans-serif">{x_hi:.3g}</text>'
        f'<text x="{MARGIN-4}" y="{HEIGHT-MARGIN}" font-size="10" text-anchor="end" font-family="sans-serif">{y_lo:.3g}</text>'
        f'<text x="{MARGIN-4}" y="{MARGIN+4}" font-size="10" text-anchor="end" font-family="sans-serif">{y_hi:.3g}</text>'
    )


def bar_chart(labels, values, title="", y_label="") -> str:
    parts = _axes(title, "", y_label)
    values = np.asarray(values, dtype=float)
    lo = min(0.0, float(values.min()))
    hi = max(0.0, float(values.max())) or 1.0
    span = hi - lo or 1.0
    n = len(values)
    slot = (WIDTH - 2 * MARGIN) / max(n, 1)
    zero_y = HEIGHT - MARGIN - (0.0 - lo) / span * (HEIGHT - 2 * MARGIN)
    for i, (label, v) in enumerate(zip(labels, values)):
        x = MARGIN + i * slot + slot * 0.1
        y = HEIGHT - MARGIN - (v - lo) / span * (HEIGHT - 2 * MARGIN)
        top, height = (y, zero_y - y) if v >= 0 else (zero_y, y - zero_y)
        parts.append(
            f'<rect x="{_f(x)}" y="{_f(top)}" width="{_f(slot*0.8)}" height="{_f(height)}" fill="{PALETTE[0]}"/>'
        )
        cx = x + slot * 0.4
        parts.append(
            f'<text x="{_f(cx)}" y="{HEIGHT-MARGIN+14}" font-size="9" text-anchor="middle" '
            f'font-family="sans-serif" transform="rotate(30 {_f(cx)} {HEIGHT-MARGIN+14})">{label}</text>'
        )
    parts.append(_tick_labels(0, max(n - 1, 1), lo, hi))
    return _document(parts)


def scatter(xs, ys, color_keys=None, title="", x_label="", y_label="") -> str:
    parts = _axes(title, x_label, y_label)
    sx, x_lo, x_hi = _scale(xs, MARGIN, WIDTH - MARGIN)
    sy, y_lo, y_hi = _scale(ys, HEIGHT - MARGIN, MARGIN)
    if color_keys is None:
        color_keys = ["all"] * len(xs)
    key_order = sorted(set(color_keys))
    color_of = {k: PALETTE[i % len(PALETTE)] for i, k in enumerate(key_order)}
    for x, y, k in zip(xs, ys, color_keys):
        parts.append(
            f'<circle cx="{_f(sx(x))}" cy="{_f(sy(y))}" r="2" fill="{color_of[k]}" fill-opacity="0.6"/>'
        )
    for i, k in enumerate(key_order):
        parts.append(
            f'<text x="{WIDTH-MARGIN+4}" y="{MARGIN + 14*i}" font-size="11" fill="{color_of[k]}" '
            f'font-family="sans-serif" text-anchor="end">{k}</text>'
        )
    parts.append(_tick_labels(x_lo, x_hi, y_lo, y_hi))
    return _document(parts)


def histogram(values_by_series, bins=30, title="", x_label="", y_label="count") -> str:
    """values_by_series: list of (label, values); overlaid step outlines."""
    all_vals = np.concatenate([np.asarray(v, float) for _, v in values_by_series])
    edges = np.histogram_bin_edges(all_vals, bins=bins)
    series = []
    for label, vals in values_by_series:
        counts, _ = np.histogram(np.asarray(vals, float), bins=edges)
        xs = np.repeat(edges, 2)[1:-1]
        ys = np.repeat(counts, 2)
        series.append((label, xs, ys))
    return line_chart(series, title=title, x_label=x_label, y_label=y_label)


def write(svg_text: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg_text)
