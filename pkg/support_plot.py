#!/usr/bin/env python3
"""
support_plot — static SVG of one wavelet's support.

Generates self-contained SVG files with no external dependencies: the triangles
of T_level, the support triangles filled, every nonzero nodal coefficient as a
dot (area proportional to its magnitude, colour by sign) and the index point
as a ring.
"""

import html

import artifacts
from wavelets import WaveletLevel

# --- Palette ---

THEMES = {
    "light": {
        "bg": "#ffffff", "mesh": "#c8c8c8", "support": "#f3e3c3", "edge": "#8a7a5a",
        "positive": "#b03a2e", "negative": "#2e5090", "index": "#111111", "text": "#333333",
    },
    "terminal": {
        "bg": "#0a0a0a", "mesh": "#333333", "support": "#1a2b1c", "edge": "#6e8a65",
        "positive": "#ffb800", "negative": "#00d4aa", "index": "#00ff41", "text": "#cccccc",
    },
}
DEFAULT_THEME = "light"

WIDTH = 480
MARGIN = 24


def _frame(points, width=WIDTH, margin=MARGIN):
    """Map physical coordinates into the SVG viewport, y upwards."""
    xs = [float(p[0]) for p in points]
    ys = [float(p[1]) for p in points]
    x0, y0 = min(xs), min(ys)
    span = max(max(xs) - x0, max(ys) - y0) or 1.0
    scale = (width - 2 * margin) / span
    height = (max(ys) - y0) * scale + 2 * margin

    def to_svg(p):
        return (margin + (float(p[0]) - x0) * scale, height - margin - (float(p[1]) - y0) * scale)

    return to_svg, height


def _polygon(corners, fill, stroke, width=1.0):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in corners)
    return f'<polygon points="{pts}" fill="{fill}" stroke="{stroke}" stroke-width="{width}"/>'


def generate_support_svg(wl: WaveletLevel, k: int, theme=None) -> str:
    """SVG document for wavelet k of the given level."""
    if not 0 <= k < len(wl):
        raise IndexError(f"wavelet {k} not in 0..{len(wl) - 1}")
    colors = THEMES.get(theme or DEFAULT_THEME, THEMES[DEFAULT_THEME])
    mesh = wl.hierarchy.levels[wl.level]
    nodes = wl.hierarchy.levels[wl.level + 1].vertices
    to_svg, height = _frame(mesh.vertices)
    support = set(wl.support_triangles(k))

    parts = [f'<rect width="{WIDTH}" height="{height:.2f}" fill="{colors["bg"]}"/>']
    for t, tri in enumerate(mesh.triangles):
        corners = [to_svg(mesh.vertices[v]) for v in tri]
        if t in support:
            parts.append(_polygon(corners, colors["support"], colors["edge"], 1.2))
        else:
            parts.append(_polygon(corners, "none", colors["mesh"], 0.6))

    column = wl.columns.get(k, {})
    biggest = max((abs(float(v)) for v in column.values()), default=1.0) or 1.0
    for r, value in sorted(column.items()):
        x, y = to_svg(nodes[wl.row_dofs[r]])
        radius = 2.0 + 5.0 * (abs(float(value)) / biggest) ** 0.5
        fill = colors["positive"] if value > 0 else colors["negative"]
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius:.2f}" fill="{fill}">'
                     f'<title>{html.escape(str(value))}</title></circle>')

    x, y = to_svg(nodes[wl.index_points[k]])
    parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="9" fill="none" '
                 f'stroke="{colors["index"]}" stroke-width="1.5"/>')
    title = (f"level {wl.level} wavelet {k} ({wl.type_tags[k]}), "
             f"{len(column)} nodal coefficients")
    parts.append(f'<text x="{MARGIN}" y="16" font-family="monospace" font-size="12" '
                 f'fill="{colors["text"]}">{html.escape(title)}</text>')
    return _wrap_svg(title, "\n".join(parts), height)


def _wrap_svg(title, body, height):
    return (
        f'<?xml version="1.0" encoding="utf-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.0f}" '
        f'viewBox="0 0 {WIDTH} {height:.2f}">\n'
        f'<title>{html.escape(title)}</title>\n'
        f'{body}\n'
        f'</svg>\n'
    )


def write_support_svg(path, wl: WaveletLevel, k: int, theme=None):
    """Write the support plot through artifacts. Returns the file Path."""
    return artifacts.write_text(path, generate_support_svg(wl, k, theme))
