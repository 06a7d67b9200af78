"""Deterministic hand-rolled SVG output: top-down scene plots and heat maps.

No plotting library is used so repeated runs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .robot import RobotModel
from .world import Environment


def _fmt(x: float) -> str:
    return f"{x:.3f}"


class _Canvas:
    def __init__(self, xmin, xmax, ymin, ymax, width=640.0, margin=30.0):
        self.xmin, self.xmax = xmin, xmax
        self.ymin, self.ymax = ymin, ymax
        span_x = max(xmax - xmin, 1e-6)
        span_y = max(ymax - ymin, 1e-6)
        self.scale = (width - 2 * margin) / span_x
        self.width = width
        self.height = span_y * self.scale + 2 * margin
        self.margin = margin
        self.parts: list[str] = []

    def px(self, x: float) -> float:
        return self.margin + (x - self.xmin) * self.scale

    def py(self, y: float) -> float:
        # world +y points up, SVG +y points down
        return self.height - self.margin - (y - self.ymin) * self.scale

    def rect(self, x0, y0, x1, y1, fill, opacity=1.0, stroke="none"):
        self.parts.append(
            f'<rect x="{_fmt(self.px(x0))}" y="{_fmt(self.py(y1))}" '
            f'width="{_fmt((x1 - x0) * self.scale)}" height="{_fmt((y1 - y0) * self.scale)}" '
            f'fill="{fill}" fill-opacity="{_fmt(opacity)}" stroke="{stroke}"/>'
        )

    def circle(self, x, y, r_world, fill, opacity=1.0):
        self.parts.append(
            f'<circle cx="{_fmt(self.px(x))}" cy="{_fmt(self.py(y))}" '
            f'r="{_fmt(max(r_world * self.scale, 2.0))}" fill="{fill}" '
            f'fill-opacity="{_fmt(opacity)}"/>'
        )

    def line(self, x0, y0, x1, y1, stroke, width=2.0, opacity=1.0):
        self.parts.append(
            f'<line x1="{_fmt(self.px(x0))}" y1="{_fmt(self.py(y0))}" '
            f'x2="{_fmt(self.px(x1))}" y2="{_fmt(self.py(y1))}" '
            f'stroke="{stroke}" stroke-width="{_fmt(width)}" '
            f'stroke-opacity="{_fmt(opacity)}"/>'
        )

    def text(self, x, y, label, size=11):
        self.parts.append(
            f'<text x="{_fmt(self.px(x))}" y="{_fmt(self.py(y) - 4)}" '
            f'font-family="sans-serif" font-size="{size}" fill="#333">{label}</text>'
        )

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(self.width)}" '
            f'height="{_fmt(self.height)}" viewBox="0 0 {_fmt(self.width)} {_fmt(self.height)}">\n'
            f'<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'
        )


def _scene_bounds(env: Environment, paths):
    xs, ys = [], []
    for box in env.obstacles:
        xs += [box.min_corner[0], box.max_corner[0]]
        ys += [box.min_corner[1], box.max_corner[1]]
    for t in env.targets:
        xs.append(t.centroid[0])
        ys.append(t.centroid[1])
    for path in paths:
        for q in path:
            xs.append(q[0])
            ys.append(q[1])
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    pad = 0.5
    return min(xs) - pad, max(xs) + pad, min(ys) - pad, max(ys) + pad


def plot_scene_svg(env: Environment, model: RobotModel, path,
                   out_path=None, extra_paths=()) -> str:
    """Top-down plot: obstacles, targets and a path fading from full opacity.

    The first two configuration entries are taken as the base x/y position.
    """
    paths = [path] + list(extra_paths) if path is not None else list(extra_paths)
    canvas = _Canvas(*_scene_bounds(env, paths))
    for box in env.obstacles:
        canvas.rect(box.min_corner[0], box.min_corner[1],
                    box.max_corner[0], box.max_corner[1], "#9aa0a6", opacity=0.8)
    for i, target in enumerate(env.targets):
        color = "#d93025" if i in env.monitored else "#f9ab00"
        canvas.circle(target.centroid[0], target.centroid[1],
                      float(max(target.box.half_extents[0], 0.08)), color)
        if target.facing is not None:
            tip = target.centroid + 0.5 * target.facing
            canvas.line(target.centroid[0], target.centroid[1], tip[0], tip[1],
                        "#d93025", width=2.0)
        canvas.text(target.centroid[0], target.centroid[1], target.label)
    palette = ["#1a73e8", "#188038", "#9334e6"]
    for p_index, p in enumerate(paths):
        if p is None or len(p) < 2:
            continue
        color = palette[p_index % len(palette)]
        n = len(p) - 1
        for i, (a, b) in enumerate(zip(p, p[1:])):
            opacity = 1.0 - 0.85 * (i / max(n, 1))
            canvas.line(a[0], a[1], b[0], b[1], color, width=3.0, opacity=opacity)
        canvas.circle(p[0][0], p[0][1], 0.1, color)
        canvas.circle(p[-1][0], p[-1][1], 0.1, "#202124")
    svg = canvas.render()
    if out_path is not None:
        Path(out_path).write_text(svg)
    return svg


def _colormap(v: float) -> str:
    """Blue -> cyan -> yellow -> red over [0, 1]."""
    v = min(max(v, 0.0), 1.0)
    stops = [
        (0.0, (26, 35, 126)),
        (0.33, (2, 136, 209)),
        (0.66, (253, 216, 53)),
        (1.0, (211, 47, 47)),
    ]
    for (t0, c0), (t1, c1) in zip(stops, stops[1:]):
        if v <= t1:
            s = (v - t0) / (t1 - t0)
            rgb = tuple(round(a + s * (b - a)) for a, b in zip(c0, c1))
            return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"
    return "rgb(211,47,47)"


def heatmap_svg(x_edges: np.ndarray, y_edges: np.ndarray, values: np.ndarray,
                out_path=None, title="") -> str:
    """Cell grid colored by score in [0, 1]; values has shape (ny, nx)."""
    canvas = _Canvas(float(x_edges[0]), float(x_edges[-1]),
                     float(y_edges[0]), float(y_edges[-1]))
    ny, nx = values.shape
    for iy in range(ny):
        for ix in range(nx):
            canvas.rect(float(x_edges[ix]), float(y_edges[iy]),
                        float(x_edges[ix + 1]), float(y_edges[iy + 1]),
                        _colormap(float(values[iy, ix])))
    if title:
        canvas.text(float(x_edges[0]), float(y_edges[-1]), title)
    svg = canvas.render()
    if out_path is not None:
        Path(out_path).write_text(svg)
    return svg
