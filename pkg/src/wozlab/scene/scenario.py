"""Scenario documents: parsing, validation, and the shipped fixtures.

A scenario is a JSON document describing the floor, the session catalog,
initial object placements, the user start cell, the optional focal object,
and optional per-variant permission overrides. The shipped ``shopping`` and
``navigation`` fixtures under ``scenarios/`` are the normative examples; the
field reference lives in docs/scenario-format.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .commands import DEFAULT_PERMISSIONS, VARIANTS
from .errors import MalformedScenario
from .model import (
    REQUIRED_ATTRIBUTES,
    ROLES,
    ZOOM_LADDER,
    Catalog,
    CatalogItem,
    Floor,
    SceneObject,
    SceneState,
    Transform,
)


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    title: str
    initial_state: SceneState
    catalog: Catalog
    permissions: dict[str, frozenset[str]]


def _need(doc: dict, key: str, kind: type, where: str):
    if key not in doc:
        raise MalformedScenario(f"{where}: missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise MalformedScenario(f"{where}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _parse_floor(doc: dict) -> Floor:
    f = _need(doc, "floor", dict, "scenario")
    cols = _need(f, "cols", int, "floor")
    rows = _need(f, "rows", int, "floor")
    cell_mm = _need(f, "cell_mm", int, "floor")
    if cols < 1 or rows < 1 or cell_mm < 1:
        raise MalformedScenario("floor: cols/rows/cell_mm must be positive")
    blocked = set()
    for i, cell in enumerate(f.get("blocked", [])):
        if not (isinstance(cell, list) and len(cell) == 2 and all(isinstance(v, int) for v in cell)):
            raise MalformedScenario(f"floor.blocked[{i}]: expected [col, row]")
        if not (0 <= cell[0] < cols and 0 <= cell[1] < rows):
            raise MalformedScenario(f"floor.blocked[{i}]: cell {cell} outside {cols}x{rows} grid")
        blocked.add((cell[0], cell[1]))
    return Floor(cols=cols, rows=rows, cell_mm=cell_mm, blocked=frozenset(blocked))


def _parse_catalog(doc: dict) -> Catalog:
    raw = _need(doc, "catalog", list, "scenario")
    if not raw:
        raise MalformedScenario("catalog: must not be empty")
    items: list[CatalogItem] = []
    seen: set[str] = set()
    for i, rec in enumerate(raw):
        where = f"catalog[{i}]"
        if not isinstance(rec, dict):
            raise MalformedScenario(f"{where}: expected object")
        item_id = _need(rec, "item_id", str, where)
        if item_id in seen:
            raise MalformedScenario(f"{where}.item_id: duplicate {item_id!r}")
        seen.add(item_id)
        attributes = _need(rec, "attributes", dict, where)
        for key in REQUIRED_ATTRIBUTES:
            if key not in attributes:
                raise MalformedScenario(f"{where}.attributes: missing required key {key!r}")
        price = _need(rec, "price_cents", int, where)
        if price < 0:
            raise MalformedScenario(f"{where}.price_cents: must be non-negative")
        fp = _need(rec, "footprint_mm", list, where)
        if len(fp) != 2 or not all(isinstance(v, int) and v > 0 for v in fp):
            raise MalformedScenario(f"{where}.footprint_mm: expected [width, depth] positive integers")
        items.append(
            CatalogItem(
                item_id=item_id,
                category=_need(rec, "category", str, where),
                display_name=_need(rec, "display_name", str, where),
                attributes={str(k): str(v) for k, v in attributes.items()},
                price_cents=price,
                footprint_mm=(fp[0], fp[1]),
            )
        )
    return Catalog(items)


def _parse_objects(doc: dict, floor: Floor, catalog: Catalog) -> tuple[SceneObject, ...]:
    raw = doc.get("objects", [])
    if not isinstance(raw, list):
        raise MalformedScenario("objects: expected list")
    objects = []
    for i, rec in enumerate(raw):
        where = f"objects[{i}]"
        if not isinstance(rec, dict):
            raise MalformedScenario(f"{where}: expected object")
        item_id = _need(rec, "item_id", str, where)
        if item_id not in catalog:
            raise MalformedScenario(f"{where}.item_id: {item_id!r} not in catalog")
        x = _need(rec, "x_mm", int, where)
        y = _need(rec, "y_mm", int, where)
        yaw = _need(rec, "yaw_deg", int, where)
        zoom = _need(rec, "zoom_pct", int, where)
        if not floor.contains_mm(x, y):
            raise MalformedScenario(f"{where}: position ({x}, {y}) outside the floor")
        if not 0 <= yaw < 360:
            raise MalformedScenario(f"{where}.yaw_deg: {yaw} outside [0, 360)")
        if zoom not in ZOOM_LADDER:
            raise MalformedScenario(f"{where}.zoom_pct: {zoom} not on the zoom ladder {ZOOM_LADDER}")
        objects.append(
            SceneObject(
                object_id=f"o{i}",
                item_id=item_id,
                transform=Transform(x_mm=x, y_mm=y, yaw_deg=yaw, zoom_pct=zoom),
            )
        )
    return tuple(objects)


def _parse_permissions(doc: dict) -> dict[str, frozenset[str]]:
    overrides = doc.get("permissions", {})
    if not isinstance(overrides, dict):
        raise MalformedScenario("permissions: expected object")
    table = dict(DEFAULT_PERMISSIONS)
    for variant, roles in overrides.items():
        if variant not in VARIANTS:
            raise MalformedScenario(f"permissions.{variant}: unknown command variant")
        if not isinstance(roles, list) or not all(isinstance(r, str) for r in roles):
            raise MalformedScenario(f"permissions.{variant}: expected list of role names")
        bad = [r for r in roles if r not in ROLES]
        if bad:
            raise MalformedScenario(f"permissions.{variant}: unknown roles {bad}")
        table[variant] = frozenset(roles)
    return table


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document; the returned initial state has
    version 0. Raises MalformedScenario with a field path on any defect."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedScenario(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedScenario("scenario: top level must be an object")

    scenario_id = _need(doc, "scenario_id", str, "scenario")
    title = doc.get("title", scenario_id)
    floor = _parse_floor(doc)
    catalog = _parse_catalog(doc)
    objects = _parse_objects(doc, floor, catalog)
    permissions = _parse_permissions(doc)

    start = _need(doc, "user_start", dict, "scenario")
    cell = _need(start, "cell", list, "user_start")
    if len(cell) != 2 or not all(isinstance(v, int) for v in cell):
        raise MalformedScenario("user_start.cell: expected [col, row]")
    if not floor.walkable(cell[0], cell[1]):
        raise MalformedScenario(f"user_start.cell: {cell} is blocked or outside the grid")
    yaw = _need(start, "yaw_deg", int, "user_start")
    if not 0 <= yaw < 360:
        raise MalformedScenario(f"user_start.yaw_deg: {yaw} outside [0, 360)")
    cx, cy = floor.cell_center(cell[0], cell[1])
    user_pose = Transform(x_mm=cx, y_mm=cy, yaw_deg=yaw, zoom_pct=100)

    focal = doc.get("focal_object")
    focal_id: str | None = None
    if focal is not None:
        if not isinstance(focal, int) or isinstance(focal, bool) or not 0 <= focal < len(objects):
            raise MalformedScenario(f"focal_object: {focal!r} is not an index into objects")
        focal_id = objects[focal].object_id

    state = SceneState(
        version=0,
        floor=floor,
        objects=objects,
        user_pose=user_pose,
        focal_object=focal_id,
        next_serial=len(objects),
    )
    return Scenario(
        scenario_id=scenario_id,
        title=title,
        initial_state=state,
        catalog=catalog,
        permissions=permissions,
    )


def load_scenario_file(path: str | Path) -> Scenario:
    return load_scenario(Path(path).read_text(encoding="utf-8"))


def builtin_scenario_dir() -> Path:
    return Path(str(resources.files("wozlab.scene").joinpath("scenarios")))


class ScenarioRepo:
    """Scenario lookup by id over a directory of ``*.json`` documents.

    Scenarios are immutable once parsed, so one repo may serve many sessions.
    """

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else builtin_scenario_dir()
        self._cache: dict[str, Scenario] = {}

    def ids(self) -> list[str]:
        found = []
        for path in sorted(self.directory.glob("*.json")):
            try:
                found.append(json.loads(path.read_text(encoding="utf-8")).get("scenario_id"))
            except (OSError, json.JSONDecodeError):
                continue
        return [s for s in found if isinstance(s, str)]

    def get(self, scenario_id: str) -> Scenario | None:
        if scenario_id in self._cache:
            return self._cache[scenario_id]
        for path in sorted(self.directory.glob("*.json")):
            try:
                scenario = load_scenario_file(path)
            except (OSError, MalformedScenario):
                continue
            if scenario.scenario_id == scenario_id:
                self._cache[scenario_id] = scenario
                return scenario
        return None
