"""Top-down SVG ray diagram of the bench.

The view looks down the ``-y`` axis: world ``x`` runs to the right and world
``z`` (forward) runs up the page.  Output depends only on the bench, so
rendering the same bench twice gives byte-identical files.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from . import kernels
from .bench import (
    LENS_ROLES,
    SIDES,
    Bench,
    FoldFailure,
    _wing_rows,
    lens_frame,
    rail_point,
    splitter_center,
    splitter_normal,
    trace_chief,
    wing_eye,
    wing_rotation,
)
from .geometry import Y_AXIS, cross, norm

PX_PER_M = 2000.0
MARGIN_PX = 40.0
MARGINAL_OFFSET_M = 0.01
MONITOR_HALF_WIDTH_M = 0.02
EYE_RADIUS_M = 0.012

_STYLE = {
    "rail": 'stroke="#999999" stroke-width="1" stroke-dasharray="4 3"',
    "lens": 'stroke="#1f5fbf" stroke-width="3"',
    "monitor": 'stroke="#222222" stroke-width="5"',
    "beamsplitter": 'stroke="#2a9d5c" stroke-width="3"',
    "eye": 'fill="#f4e3c1" stroke="#7a5c2e" stroke-width="1.5"',
    "chief": 'fill="none" stroke="#d62728" stroke-width="1.5"',
    "marginal": 'fill="none" stroke="#ff9f1c" stroke-width="1"',
    "truncated": 'fill="none" stroke="#d62728" stroke-width="1.5" stroke-dasharray="6 3"',
}


def _fmt(v: float) -> str:
    s = f"{v:.3f}"
    return "0.000" if s == "-0.000" else s


class _Canvas:
    def __init__(self, points: list[np.ndarray]):
        xs = [float(p[0]) for p in points]
        zs = [float(p[2]) for p in points]
        self.x0 = min(xs)
        self.z1 = max(zs)
        self.width = (max(xs) - self.x0) * PX_PER_M + 2 * MARGIN_PX
        self.height = (self.z1 - min(zs)) * PX_PER_M + 2 * MARGIN_PX + 90.0  # room for the legend

    def xy(self, p) -> tuple[str, str]:
        x = (float(p[0]) - self.x0) * PX_PER_M + MARGIN_PX
        y = (self.z1 - float(p[2])) * PX_PER_M + MARGIN_PX
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError("non-finite drawing coordinate")
        return _fmt(x), _fmt(y)

    def line(self, a, b, cls: str, extra: str = "") -> str:
        (x1, y1), (x2, y2) = self.xy(a), self.xy(b)
        return f'<line class="{cls}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" {_STYLE[cls]}{extra}/>'

    def polyline(self, pts, cls: str, style: str, extra: str = "") -> str:
        coords = " ".join(",".join(self.xy(p)) for p in pts)
        return f'<polyline class="{cls}" points="{coords}" {_STYLE[style]}{extra}/>'


def _horizontal_perp(v: np.ndarray) -> np.ndarray:
    h = cross(v, Y_AXIS)
    n = norm(h)
    return h / n if n > 0 else np.array([1.0, 0.0, 0.0])


def _wing_shapes(bench: Bench, side: str) -> dict:
    wing = bench.wing(side)
    rot = wing_rotation(bench, side)
    pivot = bench.pivot(side)

    def world(p):
        return pivot + rot @ np.asarray(p)

    shapes = {}
    fold = wing.beamsplitter.rail_m if wing.beamsplitter is not None else 0.0
    shapes["rail"] = (world(rail_point(wing, fold)), world(rail_point(wing, wing.monitor.axial_m)))
    lenses = []
    for role in LENS_ROLES:
        lens = wing.lens(role)
        c, axis, _, e2 = lens_frame(wing, lens)
        r = lens.aperture_radius_m
        lenses.append((role, world(c - r * e2), world(c + r * e2)))
    shapes["lenses"] = lenses
    mon = wing.monitor
    mc = rail_point(wing, mon.axial_m, mon.lateral_m, mon.height_m)
    z = np.array([0.0, 0.0, 1.0])
    shapes["monitor"] = (world(mc - MONITOR_HALF_WIDTH_M * z), world(mc + MONITOR_HALF_WIDTH_M * z))
    if wing.beamsplitter is not None:
        c = splitter_center(wing)
        t = _horizontal_perp(splitter_normal(wing))
        h = wing.beamsplitter.half_extent_m
        shapes["beamsplitter"] = (world(c - h * t), world(c + h * t))
    else:
        shapes["beamsplitter"] = None
    return shapes


def _truncated_ray(bench: Bench, side: str) -> list[np.ndarray]:
    """Crosshair ray run straight down the rail until it stops reaching surfaces."""
    wing = bench.wing(side)
    rot = wing_rotation(bench, side)
    pivot = bench.pivot(side)
    mon = wing.monitor
    p = rail_point(wing, mon.axial_m, mon.lateral_m, mon.height_m)
    d = np.array([-wing.sign, 0.0, 0.0])
    pts = [p]
    for row in _wing_rows(wing):
        q, d2, _, flags, _, _ = kernels.trace_path([row], p.tolist(), d.tolist())
        if flags & kernels.NOT_REACHED:
            break
        p, d = np.asarray(q), np.asarray(d2)
        pts.append(p)
        if flags & kernels.EXTENT_MISS:
            break
    pts.append(p + 0.03 * d)
    return [pivot + rot @ q for q in pts]


def render_svg(bench: Bench, *, marginal_offset_m: float = MARGINAL_OFFSET_M) -> str:
    """Render the bench as an SVG document string.

    Each wing carries ``data-inward-rotation-deg``.  Rays run from the
    monitor crosshair and from two marginal points ``marginal_offset_m`` to
    either side of it to each eye.  A wing whose light cannot reach the eye
    gets a dashed, truncated ray and a warning line.
    """
    shapes = {s: _wing_shapes(bench, s) for s in SIDES}
    eyes = {s: wing_eye(bench, s) for s in SIDES}
    rays: dict[str, list[tuple[str, list[np.ndarray]]]] = {}
    warnings: list[str] = []
    for side in SIDES:
        rays[side] = []
        for label, off in (("chief", 0.0), ("marginal-plus", marginal_offset_m), ("marginal-minus", -marginal_offset_m)):
            try:
                chief = trace_chief(bench, side, source_offset=(off, 0.0), with_points=True)
                rays[side].append((label, list(chief.points)))
            except FoldFailure as exc:
                if label == "chief":
                    warnings.append(str(exc))
                    rays[side].append(("truncated", _truncated_ray(bench, side)))
                break

    pts: list[np.ndarray] = []
    for side in SIDES:
        sh = shapes[side]
        pts += list(sh["rail"]) + list(sh["monitor"])
        pts += [p for _, a, b in sh["lenses"] for p in (a, b)]
        if sh["beamsplitter"] is not None:
            pts += list(sh["beamsplitter"])
        c = eyes[side].center_of_rotation
        pts += [c - EYE_RADIUS_M, c + EYE_RADIUS_M]
        for _, rp in rays[side]:
            pts += rp
    cv = _Canvas(pts)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(cv.width)}" height="{_fmt(cv.height)}" '
        f'viewBox="0 0 {_fmt(cv.width)} {_fmt(cv.height)}" font-family="sans-serif" font-size="12">',
        "<title>Haploscope top view</title>",
        f'<rect x="0" y="0" width="{_fmt(cv.width)}" height="{_fmt(cv.height)}" fill="#ffffff"/>',
    ]
    for side in SIDES:
        wing = bench.wing(side)
        sh = shapes[side]
        out.append(
            f'<g class="wing" id="wing-{side}" data-side="{side}" '
            f'data-inward-rotation-deg="{wing.rail_azimuth_deg:.9f}">'
        )
        out.append("  " + cv.line(*sh["rail"], "rail"))
        for role, a, b in sh["lenses"]:
            out.append("  " + cv.line(a, b, "lens", f' data-role="{role}"'))
        out.append("  " + cv.line(*sh["monitor"], "monitor"))
        if sh["beamsplitter"] is not None:
            out.append("  " + cv.line(*sh["beamsplitter"], "beamsplitter"))
        out.append("</g>")
    for side in SIDES:
        e = eyes[side]
        cx, cy = cv.xy(e.center_of_rotation)
        out.append(
            f'<circle class="eye" id="eye-{side}" cx="{cx}" cy="{cy}" r="{_fmt(EYE_RADIUS_M * PX_PER_M)}" {_STYLE["eye"]}/>'
        )
    for side in SIDES:
        for label, rp in rays[side]:
            style = "chief" if label == "chief" else "truncated" if label == "truncated" else "marginal"
            out.append(cv.polyline(rp, f"ray {label}", style, f' data-side="{side}"'))
    # legend
    y = cv.height - 80.0
    legend = [("lens", "lens"), ("beamsplitter", "beamsplitter"), ("monitor", "monitor"), ("chief", "chief ray"), ("marginal", "marginal ray")]
    out.append(f'<g class="legend" transform="translate(10,{_fmt(y)})">')
    for i, (style, text) in enumerate(legend):
        ly = _fmt(i * 14.0)
        stroke = _STYLE[style].replace('fill="none" ', "")
        out.append(f'  <line x1="0" y1="{ly}" x2="24" y2="{ly}" {stroke}/>')
        out.append(f'  <text x="30" y="{_fmt(i * 14.0 + 4)}">{escape(text)}</text>')
    out.append("</g>")
    for i, w in enumerate(warnings):
        out.append(f'<text class="warning" x="10" y="{_fmt(16.0 + 14.0 * i)}" fill="#b00020">{escape("warning: " + w)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_warnings(svg: str) -> list[str]:
    """Warning lines embedded in a rendered scene."""
    import xml.etree.ElementTree as ET

    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    return [t.text or "" for t in root.iter(f"{ns}text") if t.get("class") == "warning"]


__all__ = ["render_svg", "render_warnings"]
