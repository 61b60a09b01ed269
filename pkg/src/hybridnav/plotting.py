"""Minimal SVG output: trajectories over level sets of the potentials.

Contours come from a small marching-squares pass over the level-set grid;
no plotting library is involved.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .potentials import PotentialField, level_set_grid

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
MODE_COLORS = {1: "#9ecae1", 2: "#fdae6b"}

# marching-squares edge table: case -> pairs of cell edges (0 bottom, 1 right, 2 top, 3 left)
_CASES = {
    1: ((3, 0),), 2: ((0, 1),), 3: ((3, 1),), 4: ((1, 2),), 5: ((3, 2), (0, 1)),
    6: ((0, 2),), 7: ((3, 2),), 8: ((2, 3),), 9: ((0, 2),), 10: ((0, 3), (1, 2)),
    11: ((1, 2),), 12: ((1, 3),), 13: ((0, 1),), 14: ((3, 0),),
}


def contour_segments(xs: np.ndarray, ys: np.ndarray, values: np.ndarray, level: float) -> list:
    """Line segments of ``{values == level}`` on the grid.

    ``values[i, j]`` sits at ``(xs[j], ys[i])``.  Cells touching a
    non-finite value are skipped.
    """
    segs = []
    ny, nx = values.shape
    for i in range(ny - 1):
        for j in range(nx - 1):
            v = (values[i, j], values[i, j + 1], values[i + 1, j + 1], values[i + 1, j])
            if not all(math.isfinite(a) for a in v):
                continue
            case = sum(1 << k for k, a in enumerate(v) if a > level)
            if case in (0, 15):
                continue
            x0, x1, y0, y1 = xs[j], xs[j + 1], ys[i], ys[i + 1]

            def point(edge):
                if edge == 0:
                    a, b, pa, pb = v[0], v[1], (x0, y0), (x1, y0)
                elif edge == 1:
                    a, b, pa, pb = v[1], v[2], (x1, y0), (x1, y1)
                elif edge == 2:
                    a, b, pa, pb = v[3], v[2], (x0, y1), (x1, y1)
                else:
                    a, b, pa, pb = v[0], v[3], (x0, y0), (x0, y1)
                f = 0.5 if a == b else (level - a) / (b - a)
                return (pa[0] + f * (pb[0] - pa[0]), pa[1] + f * (pb[1] - pa[1]))

            for e1, e2 in _CASES[case]:
                segs.append((point(e1), point(e2)))
    return segs


class SvgCanvas:
    """World-coordinate canvas with the y axis pointing up."""

    def __init__(self, window, width: int = 800):
        self.x0, self.x1, self.y0, self.y1 = window
        self.width = width
        self.height = int(round(width * (self.y1 - self.y0) / (self.x1 - self.x0)))
        self.items: list[str] = []

    def _xy(self, x, y) -> tuple[float, float]:
        sx = (x - self.x0) / (self.x1 - self.x0) * self.width
        sy = (self.y1 - y) / (self.y1 - self.y0) * self.height
        return sx, sy

    def polyline(self, pts, color: str, width: float = 1.5, opacity: float = 1.0) -> None:
        coords = " ".join("%.2f,%.2f" % self._xy(x, y) for x, y in pts)
        self.items.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                          f'stroke-width="{width}" stroke-opacity="{opacity}"/>')

    def segments(self, segs, color: str, width: float = 0.8) -> None:
        if not segs:
            return
        d = " ".join("M%.2f %.2fL%.2f %.2f" % (*self._xy(*a), *self._xy(*b)) for a, b in segs)
        self.items.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def circle(self, center, radius: float, fill: str, stroke: str = "none") -> None:
        cx, cy = self._xy(*center)
        r = radius / (self.x1 - self.x0) * self.width
        self.items.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{r:.2f}" fill="{fill}" stroke="{stroke}"/>')

    def polygon(self, pts, fill: str, stroke: str) -> None:
        coords = " ".join("%.2f,%.2f" % self._xy(x, y) for x, y in pts)
        self.items.append(f'<polygon points="{coords}" fill="{fill}" stroke="{stroke}" stroke-dasharray="4 3"/>')

    def text(self, pos, s: str, size: int = 12) -> None:
        x, y = self._xy(*pos)
        self.items.append(f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" font-family="sans-serif">{escape(s)}</text>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *self.items, "</svg>"]) + "\n"


def default_levels(values: np.ndarray, n: int = 8) -> list[float]:
    """Levels spaced quadratically between the finite min and a high quantile."""
    fin = values[np.isfinite(values)]
    if fin.size == 0:
        return []
    lo, hi = float(fin.min()), float(np.quantile(fin, 0.6))
    return [lo + (hi - lo) * (k / n) ** 2 for k in range(1, n + 1)]


def trajectory_svg(field: PotentialField, arcs, window, resolution: float = 0.5,
                   levels: int = 8, title: str = "", width: int = 800) -> str:
    """SVG of level sets of V_1 and V_2, the diamond, the obstacle and each arc.

    ``arcs`` is a sequence of :class:`~hybridnav.engine.HybridArc`; true
    positions are drawn solid and estimates faint.
    """
    cv = SvgCanvas(window, width)
    for q in (1, 2):
        xs, ys, vals = level_set_grid(field, q, window, resolution)
        for lv in default_levels(vals, levels):
            cv.segments(contour_segments(xs, ys, vals, lv), MODE_COLORS[q])
    cov = field.covering
    cv.polygon(cov.diamond_vertices(), "none", "#555555")
    cv.circle(cov.obstacle.center, cov.obstacle.radius, "#444444")
    for i, arc in enumerate(arcs):
        color = PALETTE[i % len(PALETTE)]
        if len(arc):
            cv.polyline(arc.estimates, color, 0.8, 0.35)
            cv.polyline(arc.positions, color, 1.8)
            cv.circle(arc.positions[0], 0.4, color)
        tg = arc.targets
        if len(tg) and np.isfinite(tg).all() and np.ptp(tg, axis=0).max() > 0:
            cv.polyline(tg, "#000000", 1.0, 0.6)
    cv.circle(field.target, 0.5, "#000000")
    if title:
        cv.text((window[0] + 0.02 * (window[1] - window[0]), window[3] - 0.05 * (window[3] - window[2])), title, 14)
    return cv.render()
