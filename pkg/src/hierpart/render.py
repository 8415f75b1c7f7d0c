"""Static SVG rendering of a route plan."""

from __future__ import annotations

import colorsys
from pathlib import Path
from xml.sax.saxutils import escape

from .instance import Instance
from .solution import RoutePlan, plan_cost

SIZE = 600
MARGIN = 30


def tour_color(i: int) -> str:
    """Distinct strokes: hues stepped by the golden angle."""
    h = (i * 0.618033988749895) % 1.0
    r, g, b = colorsys.hls_to_rgb(h, 0.45, 0.75)
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def svg_string(inst: Instance, plan: RoutePlan) -> str:
    pts = inst.points
    lo = pts.min(axis=0)
    span = max(float((pts.max(axis=0) - lo).max()), 1e-12)
    scale = (SIZE - 2 * MARGIN) / span

    def xy(p) -> tuple[float, float]:
        # flip y so larger coordinates are drawn higher up
        return (MARGIN + (p[0] - lo[0]) * scale, SIZE - MARGIN - (p[1] - lo[1]) * scale)

    cost = plan_cost(plan, inst)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE + 30}" '
        f'viewBox="0 0 {SIZE} {SIZE + 30}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for i, tour in enumerate(plan.tours):
        coords = [xy(inst.depot)] + [xy(inst.customers[v]) for v in tour] + [xy(inst.depot)]
        pts_attr = " ".join(f"{x:.2f},{y:.2f}" for x, y in coords)
        out.append(f'<polyline class="tour" data-tour="{i}" points="{pts_attr}" fill="none" '
                   f'stroke="{tour_color(i)}" stroke-width="1.5"/>')
    for v in range(inst.n):
        x, y = xy(inst.customers[v])
        out.append(f'<circle class="customer" cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="#333"/>')
    dx, dy = xy(inst.depot)
    out.append(f'<rect class="depot" x="{dx - 5:.2f}" y="{dy - 5:.2f}" width="10" height="10" '
               f'fill="black"/>')
    label = escape(f"total cost: {cost:.4f} ({len(plan.tours)} tours)")
    out.append(f'<text class="legend" data-cost="{cost:.6f}" x="{MARGIN}" y="{SIZE + 15}" '
               f'font-family="sans-serif" font-size="13">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_svg(inst: Instance, plan: RoutePlan, path: str | Path) -> Path:
    """Write the plan as SVG: depot square, one polyline per tour, cost legend."""
    path = Path(path)
    path.write_text(svg_string(inst, plan), encoding="utf-8")
    return path
