"""Deterministic top-down SVG snapshot of a scene state.

Equal states produce byte-identical documents: no timestamps, no random ids,
integer-only arithmetic, and a fixed element order (grid, objects in scene
order, focal ring, user marker). Object fill comes from the effective
"color" attribute; the "pattern" attribute selects a hatch overlay.

Orientation: world y grows upward on screen (grid row 0 is the bottom row),
so Navigate(0, +1) moves the marker up. Yaw is compass-style: 0 points up,
positive turns clockwise.
"""

from __future__ import annotations

import re

from .model import Catalog, SceneObject, SceneState

# Rendered pixel edge of one floor cell; all mm values scale by cell ratio.
CELL_PX = 48

_FILL_RE = re.compile(r"^([A-Za-z]+|#[0-9a-fA-F]{6})$")

# Hatch overlay geometry per known pattern name, drawn inside an 8x8 tile.
_HATCH_TILES = {
    "striped": '<path d="M-2 2 L2 -2 M0 8 L8 0 M6 10 L10 6" stroke="#000" stroke-opacity="0.35" stroke-width="1.5" fill="none"/>',
    "dotted": '<circle cx="2" cy="2" r="1.3" fill="#000" fill-opacity="0.35"/><circle cx="6" cy="6" r="1.3" fill="#000" fill-opacity="0.35"/>',
    "checked": '<rect x="0" y="0" width="4" height="4" fill="#000" fill-opacity="0.25"/><rect x="4" y="4" width="4" height="4" fill="#000" fill-opacity="0.25"/>',
    "plaid": '<path d="M4 0 L4 8 M0 4 L8 4" stroke="#000" stroke-opacity="0.3" stroke-width="2" fill="none"/>',
}


def sanitize_fill(value: str) -> str:
    """Map an attribute value to a safe SVG fill; anything that is not a
    plain color word or #rrggbb hex renders as gray."""
    if _FILL_RE.match(value):
        return value.lower()
    return "gray"


def _px(mm: int, cell_mm: int) -> int:
    return (mm * CELL_PX) // cell_mm


def _object_fragment(obj: SceneObject, catalog: Catalog, cell_mm: int, height_px: int) -> str:
    attrs = obj.attributes(catalog)
    fill = sanitize_fill(attrs.get("color", "gray"))
    pattern = attrs.get("pattern", "solid")
    item = catalog.get(obj.item_id)
    w_mm, d_mm = item.footprint_mm if item else (cell_mm, cell_mm)
    t = obj.transform
    w = _px((w_mm * t.zoom_pct) // 100, cell_mm)
    d = _px((d_mm * t.zoom_pct) // 100, cell_mm)
    x = _px(t.x_mm, cell_mm)
    y = height_px - _px(t.y_mm, cell_mm)
    parts = [
        f'<g class="object" transform="translate({x} {y}) rotate({t.yaw_deg})">',
        f'<rect class="object-shape" x="{-w // 2}" y="{-d // 2}" width="{w}" height="{d}" '
        f'fill="{fill}" stroke="#222" stroke-width="2"/>',
    ]
    if pattern in _HATCH_TILES:
        parts.append(
            f'<rect class="object-hatch" x="{-w // 2}" y="{-d // 2}" width="{w}" height="{d}" '
            f'fill="url(#hatch-{pattern})" stroke="none"/>'
        )
    parts.append("</g>")
    parts.append(
        f'<text class="label" x="{x}" y="{y - d // 2 - 6}" font-size="13" '
        f'font-family="monospace" text-anchor="middle" fill="#111">{obj.object_id}</text>'
    )
    return "".join(parts)


def render_snapshot(state: SceneState, catalog: Catalog) -> str:
    """Render the scene as an SVG document string (UTF-8 encodes to the
    snapshot bytes stored on disk and attached to remote-render deltas)."""
    floor = state.floor
    width = floor.cols * CELL_PX
    height = floor.rows * CELL_PX

    used_patterns = sorted(
        {
            p
            for obj in state.objects
            if (p := obj.attributes(catalog).get("pattern", "solid")) in _HATCH_TILES
        }
    )
    defs = "".join(
        f'<pattern id="hatch-{name}" width="8" height="8" patternUnits="userSpaceOnUse">'
        f"{_HATCH_TILES[name]}</pattern>"
        for name in used_patterns
    )

    cells = []
    for row in range(floor.rows):
        for col in range(floor.cols):
            fill = "#3a3a3a" if (col, row) in floor.blocked else "#f7f5ef"
            cells.append(
                f'<rect class="cell" x="{col * CELL_PX}" y="{height - (row + 1) * CELL_PX}" '
                f'width="{CELL_PX}" height="{CELL_PX}" fill="{fill}" stroke="#d8d4c8" stroke-width="1"/>'
            )

    objects = [_object_fragment(obj, catalog, floor.cell_mm, height) for obj in state.objects]

    focal = []
    if state.focal_object is not None:
        fobj = state.find_object(state.focal_object)
        if fobj is not None:
            fx = _px(fobj.transform.x_mm, floor.cell_mm)
            fy = height - _px(fobj.transform.y_mm, floor.cell_mm)
            focal.append(
                f'<circle class="focal-ring" cx="{fx}" cy="{fy}" r="{CELL_PX}" fill="none" '
                f'stroke="#e0a000" stroke-width="3" stroke-dasharray="6 4"/>'
            )

    ux = _px(state.user_pose.x_mm, floor.cell_mm)
    uy = height - _px(state.user_pose.y_mm, floor.cell_mm)
    r = CELL_PX // 3
    marker = (
        f'<g class="user-marker" transform="translate({ux} {uy}) rotate({state.user_pose.yaw_deg})">'
        f'<circle r="{r}" fill="#2060c0" fill-opacity="0.9" stroke="#123" stroke-width="2"/>'
        f'<polygon points="0,{-r - 10} {-r // 2},{-r + 2} {r // 2},{-r + 2}" fill="#123"/>'
        "</g>"
    )

    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
        f'width="{width}" height="{height}">'
        f"<defs>{defs}</defs>"
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#efece4"/>'
        + "".join(cells)
        + "".join(objects)
        + "".join(focal)
        + marker
        + f'<text class="version-tag" x="4" y="{height - 6}" font-size="11" '
        f'font-family="monospace" fill="#666">v{state.version}</text>'
        "</svg>"
    )


def snapshot_bytes(state: SceneState, catalog: Catalog) -> bytes:
    return render_snapshot(state, catalog).encode("utf-8")
