"""Standalone SVG scatterplots of 2-D coordinates colored by class."""
from __future__ import annotations

from xml.sax.saxutils import escape, quoteattr

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
           "#9467bd", "#8c564b", "#e377c2", "#17becf")
DEFAULT_COLOR = "#7f7f7f"

WIDTH = 480
HEIGHT = 400
PLOT = 400  # square plot area; the legend sits to its right
RADIUS = 3


def _axis(lo, hi):
    span = hi - lo
    if span <= 0:
        span = 1.0
    pad = 0.05 * span
    return lo - pad, hi + pad


def label_colors(labels):
    """Palette color per label, assigned in lexicographic label order."""
    return {lab: PALETTE[k % len(PALETTE)] for k, lab in enumerate(sorted(labels))}


def scatter_svg(coords, labels=None, title=None):
    """Render ``coords`` (N x 2) as an SVG document string.

    ``labels`` maps item index to a set of labels; an item with several
    labels takes the color of its lexicographically first one, unlabeled
    items are drawn grey.
    """
    coords = np.asarray(coords, dtype=float)
    assignments = labels.assignments if labels is not None else {}
    colors = label_colors(set().union(*assignments.values()) if assignments else ())
    x0, x1 = _axis(coords[:, 0].min(), coords[:, 0].max())
    y0, y1 = _axis(coords[:, 1].min(), coords[:, 1].max())

    def sx(x):
        return (x - x0) / (x1 - x0) * PLOT

    def sy(y):
        return PLOT - (y - y0) / (y1 - y0) * PLOT

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="0" y="0" width="{PLOT}" height="{PLOT}" fill="white" stroke="black"/>']
    if title:
        out.append(f"<title>{escape(title)}</title>")
    for i, (x, y) in enumerate(coords):
        labs = assignments.get(i)
        fill = colors[min(labs)] if labs else DEFAULT_COLOR
        out.append(f'<circle cx="{sx(x):.3f}" cy="{sy(y):.3f}" r="{RADIUS}" fill="{fill}"/>')
    out.append('<g class="legend">')
    for k, (lab, col) in enumerate(colors.items()):
        ty = 16 + 16 * k
        out.append(f'<rect x="{PLOT + 8}" y="{ty - 9}" width="10" height="10" fill="{col}"/>')
        out.append(f'<text x="{PLOT + 22}" y="{ty}" font-size="11" '
                   f'data-label={quoteattr(lab)}>{escape(lab)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
