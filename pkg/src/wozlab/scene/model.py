"""Scene data model: floor grid, catalog, placed objects, and world state.

All geometry is integer-only (millimeters, whole degrees, a fixed percent
ladder for zoom) so that canonical serialization is bit-exact across
processes and platforms. State values are immutable; every mutation goes
through ``commands.apply_command`` and produces a new state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

# The only zoom levels an object may hold. ZoomItem steps move one rung at a
# time; AddObject and scenario placements must start on a rung.
ZOOM_LADDER: tuple[int, ...] = (25, 50, 75, 100, 150, 200, 300, 400)

# Rotation deltas are restricted to this granularity.
YAW_STEP_DEG = 15

ROLES: tuple[str, ...] = ("user", "wizard", "agent", "system")

# Attribute keys every catalog item must define.
REQUIRED_ATTRIBUTES: tuple[str, ...] = ("color", "pattern")


@dataclass(frozen=True)
class Transform:
    """Pose of an object or the user: position in mm, heading, zoom percent."""

    x_mm: int
    y_mm: int
    yaw_deg: int
    zoom_pct: int


@dataclass(frozen=True)
class CatalogItem:
    item_id: str
    category: str
    display_name: str
    attributes: dict[str, str]
    price_cents: int
    footprint_mm: tuple[int, int]  # (width, depth)


class Catalog:
    """Immutable lookup of catalog items for one session."""

    def __init__(self, items: list[CatalogItem]):
        self._items: dict[str, CatalogItem] = {}
        for item in items:
            if item.item_id in self._items:
                raise ValueError(f"duplicate item_id {item.item_id!r}")
            self._items[item.item_id] = item

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._items

    def get(self, item_id: str) -> CatalogItem | None:
        return self._items.get(item_id)

    def items(self) -> list[CatalogItem]:
        return list(self._items.values())


@dataclass(frozen=True)
class SceneObject:
    """One placed object. ``overrides`` holds per-object attribute edits
    (SetAttribute) layered over the catalog item's attributes."""

    object_id: str
    item_id: str
    transform: Transform
    overrides: dict[str, str] = field(default_factory=dict)

    def attributes(self, catalog: Catalog) -> dict[str, str]:
        item = catalog.get(self.item_id)
        base = dict(item.attributes) if item else {}
        base.update(self.overrides)
        return base


@dataclass(frozen=True)
class Floor:
    """Grid of walkable/blocked cells; cell edge length in mm."""

    cols: int
    rows: int
    cell_mm: int
    blocked: frozenset[tuple[int, int]] = frozenset()

    @property
    def width_mm(self) -> int:
        return self.cols * self.cell_mm

    @property
    def height_mm(self) -> int:
        return self.rows * self.cell_mm

    def in_grid(self, col: int, row: int) -> bool:
        return 0 <= col < self.cols and 0 <= row < self.rows

    def walkable(self, col: int, row: int) -> bool:
        return self.in_grid(col, row) and (col, row) not in self.blocked

    def cell_of(self, x_mm: int, y_mm: int) -> tuple[int, int]:
        return (x_mm // self.cell_mm, y_mm // self.cell_mm)

    def cell_center(self, col: int, row: int) -> tuple[int, int]:
        half = self.cell_mm // 2
        return (col * self.cell_mm + half, row * self.cell_mm + half)

    def contains_mm(self, x_mm: int, y_mm: int) -> bool:
        return 0 <= x_mm < self.width_mm and 0 <= y_mm < self.height_mm


@dataclass(frozen=True)
class SceneState:
    """Authoritative world state. ``version`` advances by exactly one per
    applied command; ``next_serial`` feeds AddObject id assignment and is part
    of the canonical serialization so replicas assign identical ids."""

    version: int
    floor: Floor
    objects: tuple[SceneObject, ...]
    user_pose: Transform
    focal_object: str | None = None
    next_serial: int = 0

    def find_object(self, object_id: str) -> SceneObject | None:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        return None

    def object_ids(self) -> list[str]:
        return [obj.object_id for obj in self.objects]
