"""Self-contained SVG scatter plots of 2-D layouts."""

import colorsys
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

# Tableau 10
PALETTE = ("#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
           "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac")

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 60, 150, 40, 50


def color_for(i):
    """Fixed colour of the i-th distinct label; beyond the palette, golden-angle hues."""
    if i < len(PALETTE):
        return PALETTE[i]
    h = (i * 0.618033988749895) % 1.0
    r, g, b = colorsys.hsv_to_rgb(h, 0.65, 0.85)
    return "#{:02x}{:02x}{:02x}".format(round(r * 255), round(g * 255), round(b * 255))


def _axis_map(values, lo_px, hi_px):
    lo, hi = float(values.min()), float(values.max())
    if hi - lo <= 0:
        return lambda v: np.full(np.shape(v), (lo_px + hi_px) / 2), lo, hi
    scale = (hi_px - lo_px) / (hi - lo)
    return lambda v: lo_px + (np.asarray(v) - lo) * scale, lo, hi


def scatter_svg(layout, labels, title="", label_names=None):
    """SVG text with one circle per row of ``layout`` (N x 2), coloured by label."""
    layout = np.asarray(layout, dtype=np.float64)
    labels = np.asarray(labels)
    if layout.ndim != 2 or layout.shape[1] != 2:
        raise ValueError(f"layout must be N x 2, got {layout.shape}")
    if len(labels) != len(layout):
        raise ValueError(f"{len(layout)} points but {len(labels)} labels")
    if not np.isfinite(layout).all():
        raise ValueError("layout contains non-finite coordinates")
    uniq = sorted(set(labels.tolist()))
    colour = {lab: color_for(i) for i, lab in enumerate(uniq)}
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T   # SVG y grows downwards
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" '
                   f'font-size="14">{escape(str(title))}</text>')
    out.append(f'<g class="axes" stroke="#333333" stroke-width="1">'
               f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>'
               f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>')
    if len(layout):
        fx, xlo, xhi = _axis_map(layout[:, 0], x0 + 8, x1 - 8)
        fy, ylo, yhi = _axis_map(layout[:, 1], y0 - 8, y1 + 8)
        out.append(f'<text x="{x0}" y="{y0 + 16}" text-anchor="start">{xlo:.2f}</text>'
                   f'<text x="{x1}" y="{y0 + 16}" text-anchor="end">{xhi:.2f}</text>'
                   f'<text x="{x0 - 6}" y="{y0}" text-anchor="end">{ylo:.2f}</text>'
                   f'<text x="{x0 - 6}" y="{y1 + 8}" text-anchor="end">{yhi:.2f}</text>')
        px, py = fx(layout[:, 0]), fy(layout[:, 1])
        out.append('<g class="markers" fill-opacity="0.8">')
        for x, y, lab in zip(px, py, labels.tolist()):
            out.append(f'<circle class="marker" cx="{x:.2f}" cy="{y:.2f}" r="3.5" fill="{colour[lab]}"/>')
        out.append("</g>")
    out.append(f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">dim 1</text>'
               f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">dim 2</text>')
    out.append('<g class="legend">')
    for i, lab in enumerate(uniq):
        name = label_names[lab] if label_names is not None else lab
        ly = MARGIN_T + 10 + 18 * i
        out.append(f'<rect x="{x1 + 20}" y="{ly - 9}" width="10" height="10" fill="{colour[lab]}"/>'
                   f'<text x="{x1 + 36}" y="{ly}">{escape(str(name))}</text>')
    out.append("</g></svg>")
    return "\n".join(out) + "\n"


def write_scatter(path, layout, labels, title="", label_names=None):
    text = scatter_svg(layout, labels, title, label_names)
    Path(path).write_text(text, encoding="utf-8")
    return Path(path)
