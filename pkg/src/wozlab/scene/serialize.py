"""Canonical scene serialization and digests.

The canonical form is compact JSON with sorted keys and ASCII-only output;
equal states serialize to identical bytes on any platform, which is what
makes per-delta digest verification meaningful.
"""

from __future__ import annotations

import hashlib
import json

from .model import Catalog, CatalogItem, Floor, SceneObject, SceneState, Transform

FORMAT_VERSION = 1


def canonical_json(data) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("utf-8")


def transform_to_dict(t: Transform) -> dict:
    return {"x_mm": t.x_mm, "y_mm": t.y_mm, "yaw_deg": t.yaw_deg, "zoom_pct": t.zoom_pct}


def transform_from_dict(d: dict) -> Transform:
    return Transform(
        x_mm=int(d["x_mm"]),
        y_mm=int(d["y_mm"]),
        yaw_deg=int(d["yaw_deg"]),
        zoom_pct=int(d["zoom_pct"]),
    )


def object_to_dict(obj: SceneObject) -> dict:
    return {
        "object_id": obj.object_id,
        "item_id": obj.item_id,
        "transform": transform_to_dict(obj.transform),
        "overrides": dict(sorted(obj.overrides.items())),
    }


def object_from_dict(d: dict) -> SceneObject:
    return SceneObject(
        object_id=str(d["object_id"]),
        item_id=str(d["item_id"]),
        transform=transform_from_dict(d["transform"]),
        overrides={str(k): str(v) for k, v in d.get("overrides", {}).items()},
    )


def floor_to_dict(floor: Floor) -> dict:
    return {
        "cols": floor.cols,
        "rows": floor.rows,
        "cell_mm": floor.cell_mm,
        "blocked": sorted([c, r] for c, r in floor.blocked),
    }


def floor_from_dict(d: dict) -> Floor:
    return Floor(
        cols=int(d["cols"]),
        rows=int(d["rows"]),
        cell_mm=int(d["cell_mm"]),
        blocked=frozenset((int(c), int(r)) for c, r in d.get("blocked", [])),
    )


def state_to_dict(state: SceneState) -> dict:
    return {
        "fmt": FORMAT_VERSION,
        "version": state.version,
        "floor": floor_to_dict(state.floor),
        "objects": [object_to_dict(o) for o in state.objects],
        "user_pose": transform_to_dict(state.user_pose),
        "focal_object": state.focal_object,
        "next_serial": state.next_serial,
    }


def state_from_dict(d: dict) -> SceneState:
    if d.get("fmt") != FORMAT_VERSION:
        raise ValueError(f"unsupported state format {d.get('fmt')!r}")
    focal = d.get("focal_object")
    return SceneState(
        version=int(d["version"]),
        floor=floor_from_dict(d["floor"]),
        objects=tuple(object_from_dict(o) for o in d["objects"]),
        user_pose=transform_from_dict(d["user_pose"]),
        focal_object=None if focal is None else str(focal),
        next_serial=int(d["next_serial"]),
    )


def state_bytes(state: SceneState) -> bytes:
    return canonical_json(state_to_dict(state))


def digest(state: SceneState) -> bytes:
    """32-byte SHA-256 of the canonical serialization."""
    return hashlib.sha256(state_bytes(state)).digest()


def digest_hex(state: SceneState) -> str:
    return digest(state).hex()


def catalog_to_dict(catalog: Catalog) -> dict:
    return {
        "items": [
            {
                "item_id": item.item_id,
                "category": item.category,
                "display_name": item.display_name,
                "attributes": dict(sorted(item.attributes.items())),
                "price_cents": item.price_cents,
                "footprint_mm": list(item.footprint_mm),
            }
            for item in catalog.items()
        ]
    }


def catalog_from_dict(d: dict) -> Catalog:
    items = []
    for rec in d["items"]:
        items.append(
            CatalogItem(
                item_id=str(rec["item_id"]),
                category=str(rec["category"]),
                display_name=str(rec["display_name"]),
                attributes={str(k): str(v) for k, v in rec["attributes"].items()},
                price_cents=int(rec["price_cents"]),
                footprint_mm=(int(rec["footprint_mm"][0]), int(rec["footprint_mm"][1])),
            )
        )
    return Catalog(items)
