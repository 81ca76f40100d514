"""Scene command vocabulary, role permissions, and the apply step.

``apply_command`` is a pure function: it either returns a new state whose
version is exactly one higher, or raises a ``SceneError`` leaving the input
untouched. Commands arriving off the wire go through ``command_from_dict``,
which funnels every malformed payload into ``InvalidCommand``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Union

from .errors import (
    InvalidCommand,
    OutOfBounds,
    PermissionDenied,
    UnknownCatalogItem,
    UnknownObject,
)
from .model import ROLES, YAW_STEP_DEG, ZOOM_LADDER, Catalog, SceneObject, SceneState, Transform


@dataclass(frozen=True)
class Navigate:
    dx_cells: int
    dy_cells: int
    issuer_role: str


@dataclass(frozen=True)
class TurnUser:
    dyaw_deg: int
    issuer_role: str


@dataclass(frozen=True)
class RotateItem:
    object_id: str
    dyaw_deg: int
    issuer_role: str


@dataclass(frozen=True)
class ZoomItem:
    object_id: str
    dzoom_steps: int
    issuer_role: str


@dataclass(frozen=True)
class FocusItem:
    object_id: str
    issuer_role: str


@dataclass(frozen=True)
class SetAttribute:
    object_id: str
    key: str
    value: str
    issuer_role: str


@dataclass(frozen=True)
class AddObject:
    item_id: str
    transform: Transform
    issuer_role: str


@dataclass(frozen=True)
class RemoveObject:
    object_id: str
    issuer_role: str


SceneCommand = Union[
    Navigate, TurnUser, RotateItem, ZoomItem, FocusItem, SetAttribute, AddObject, RemoveObject
]

COMMAND_TYPES: dict[str, type] = {
    cls.__name__: cls
    for cls in (Navigate, TurnUser, RotateItem, ZoomItem, FocusItem, SetAttribute, AddObject, RemoveObject)
}

VARIANTS: tuple[str, ...] = tuple(COMMAND_TYPES)

# Normative permission table: which roles may issue which variant. Movement is
# user-side; scene edits are assistant-side; rotate/zoom belong to any
# participant. ``system`` is not a participant and may issue nothing.
DEFAULT_PERMISSIONS: dict[str, frozenset[str]] = {
    "Navigate": frozenset({"user"}),
    "TurnUser": frozenset({"user"}),
    "RotateItem": frozenset({"user", "wizard", "agent"}),
    "ZoomItem": frozenset({"user", "wizard", "agent"}),
    "FocusItem": frozenset({"wizard", "agent"}),
    "SetAttribute": frozenset({"wizard", "agent"}),
    "AddObject": frozenset({"wizard", "agent"}),
    "RemoveObject": frozenset({"wizard", "agent"}),
}


def variant_of(cmd: SceneCommand) -> str:
    return type(cmd).__name__


def command_to_dict(cmd: SceneCommand) -> dict:
    d: dict = {"variant": variant_of(cmd)}
    for f in fields(cmd):
        value = getattr(cmd, f.name)
        if isinstance(value, Transform):
            value = {
                "x_mm": value.x_mm,
                "y_mm": value.y_mm,
                "yaw_deg": value.yaw_deg,
                "zoom_pct": value.zoom_pct,
            }
        d[f.name] = value
    return d


def command_from_dict(d: dict) -> SceneCommand:
    if not isinstance(d, dict):
        raise InvalidCommand("command payload is not an object")
    variant = d.get("variant")
    cls = COMMAND_TYPES.get(variant)  # type: ignore[arg-type]
    if cls is None:
        raise InvalidCommand(f"unknown command variant {variant!r}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in d:
            raise InvalidCommand(f"{variant}: missing field {f.name!r}")
        value = d[f.name]
        if f.name == "transform":
            if not isinstance(value, dict):
                raise InvalidCommand(f"{variant}: transform must be an object")
            try:
                value = Transform(
                    x_mm=int(value["x_mm"]),
                    y_mm=int(value["y_mm"]),
                    yaw_deg=int(value["yaw_deg"]),
                    zoom_pct=int(value["zoom_pct"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidCommand(f"{variant}: bad transform: {exc}") from exc
        elif f.type in ("int",):
            if not isinstance(value, int) or isinstance(value, bool):
                raise InvalidCommand(f"{variant}: field {f.name!r} must be an integer")
        elif f.type in ("str",):
            if not isinstance(value, str):
                raise InvalidCommand(f"{variant}: field {f.name!r} must be a string")
        kwargs[f.name] = value
    return cls(**kwargs)


def _check_quantities(cmd: SceneCommand) -> None:
    if cmd.issuer_role not in ROLES:
        raise InvalidCommand(f"unknown issuer_role {cmd.issuer_role!r}")
    if isinstance(cmd, (TurnUser, RotateItem)) and cmd.dyaw_deg % YAW_STEP_DEG != 0:
        raise InvalidCommand(f"rotation delta {cmd.dyaw_deg} is not a multiple of {YAW_STEP_DEG}")
    if isinstance(cmd, ZoomItem) and cmd.dzoom_steps not in (-1, 1):
        raise InvalidCommand(f"zoom step {cmd.dzoom_steps} not in {{-1, +1}}")
    if isinstance(cmd, AddObject):
        t = cmd.transform
        if t.zoom_pct not in ZOOM_LADDER:
            raise InvalidCommand(f"zoom_pct {t.zoom_pct} is not on the zoom ladder")
        if not 0 <= t.yaw_deg < 360:
            raise InvalidCommand(f"yaw_deg {t.yaw_deg} outside [0, 360)")


def _require_object(state: SceneState, object_id: str) -> SceneObject:
    obj = state.find_object(object_id)
    if obj is None:
        raise UnknownObject(f"no object {object_id!r} in scene")
    return obj


def _replace_object(state: SceneState, obj: SceneObject) -> tuple[SceneObject, ...]:
    return tuple(obj if o.object_id == obj.object_id else o for o in state.objects)


def apply_command(
    state: SceneState,
    cmd: SceneCommand,
    catalog: Catalog,
    permissions: dict[str, frozenset[str]] | None = None,
) -> SceneState:
    """Apply one command, returning the successor state (version + 1).

    Raises PermissionDenied / UnknownObject / OutOfBounds / UnknownCatalogItem
    / InvalidCommand without touching ``state``.
    """
    table = permissions if permissions is not None else DEFAULT_PERMISSIONS
    _check_quantities(cmd)
    variant = variant_of(cmd)
    if cmd.issuer_role not in table.get(variant, frozenset()):
        raise PermissionDenied(f"role {cmd.issuer_role!r} may not issue {variant}")

    if isinstance(cmd, Navigate):
        floor = state.floor
        col, row = floor.cell_of(state.user_pose.x_mm, state.user_pose.y_mm)
        target = (col + cmd.dx_cells, row + cmd.dy_cells)
        if not floor.walkable(*target):
            raise OutOfBounds(f"cell {target} is blocked or outside the grid")
        x, y = floor.cell_center(*target)
        pose = replace(state.user_pose, x_mm=x, y_mm=y)
        return replace(state, version=state.version + 1, user_pose=pose)

    if isinstance(cmd, TurnUser):
        pose = replace(state.user_pose, yaw_deg=(state.user_pose.yaw_deg + cmd.dyaw_deg) % 360)
        return replace(state, version=state.version + 1, user_pose=pose)

    if isinstance(cmd, RotateItem):
        obj = _require_object(state, cmd.object_id)
        t = replace(obj.transform, yaw_deg=(obj.transform.yaw_deg + cmd.dyaw_deg) % 360)
        objects = _replace_object(state, replace(obj, transform=t))
        return replace(state, version=state.version + 1, objects=objects)

    if isinstance(cmd, ZoomItem):
        obj = _require_object(state, cmd.object_id)
        idx = ZOOM_LADDER.index(obj.transform.zoom_pct) + cmd.dzoom_steps
        if not 0 <= idx < len(ZOOM_LADDER):
            raise OutOfBounds(f"zoom ladder end exceeded from {obj.transform.zoom_pct}")
        t = replace(obj.transform, zoom_pct=ZOOM_LADDER[idx])
        objects = _replace_object(state, replace(obj, transform=t))
        return replace(state, version=state.version + 1, objects=objects)

    if isinstance(cmd, FocusItem):
        _require_object(state, cmd.object_id)
        return replace(state, version=state.version + 1, focal_object=cmd.object_id)

    if isinstance(cmd, SetAttribute):
        obj = _require_object(state, cmd.object_id)
        overrides = dict(obj.overrides)
        overrides[cmd.key] = cmd.value
        objects = _replace_object(state, replace(obj, overrides=overrides))
        return replace(state, version=state.version + 1, objects=objects)

    if isinstance(cmd, AddObject):
        if cmd.item_id not in catalog:
            raise UnknownCatalogItem(f"catalog has no item {cmd.item_id!r}")
        t = cmd.transform
        if not state.floor.contains_mm(t.x_mm, t.y_mm):
            raise OutOfBounds(f"placement ({t.x_mm}, {t.y_mm}) outside the floor")
        obj = SceneObject(object_id=f"o{state.next_serial}", item_id=cmd.item_id, transform=t)
        return replace(
            state,
            version=state.version + 1,
            objects=state.objects + (obj,),
            next_serial=state.next_serial + 1,
        )

    if isinstance(cmd, RemoveObject):
        _require_object(state, cmd.object_id)
        objects = tuple(o for o in state.objects if o.object_id != cmd.object_id)
        focal = state.focal_object
        if focal == cmd.object_id:
            focal = None
        return replace(state, version=state.version + 1, objects=objects, focal_object=focal)

    raise InvalidCommand(f"unhandled command {variant}")  # pragma: no cover
