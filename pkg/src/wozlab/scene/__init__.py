"""Deterministic 2D scene engine: state, commands, digests, snapshots, scenarios."""

from .commands import (
    DEFAULT_PERMISSIONS,
    VARIANTS,
    AddObject,
    FocusItem,
    Navigate,
    RemoveObject,
    RotateItem,
    SceneCommand,
    SetAttribute,
    TurnUser,
    ZoomItem,
    apply_command,
    command_from_dict,
    command_to_dict,
    variant_of,
)
from .errors import (
    InvalidCommand,
    MalformedScenario,
    OutOfBounds,
    PermissionDenied,
    SceneError,
    UnknownCatalogItem,
    UnknownObject,
)
from .model import (
    ROLES,
    ZOOM_LADDER,
    Catalog,
    CatalogItem,
    Floor,
    SceneObject,
    SceneState,
    Transform,
)
from .render import render_snapshot, snapshot_bytes
from .scenario import Scenario, ScenarioRepo, builtin_scenario_dir, load_scenario, load_scenario_file
from .serialize import (
    canonical_json,
    catalog_from_dict,
    catalog_to_dict,
    digest,
    digest_hex,
    state_bytes,
    state_from_dict,
    state_to_dict,
)

__all__ = [
    "AddObject",
    "Catalog",
    "CatalogItem",
    "DEFAULT_PERMISSIONS",
    "Floor",
    "FocusItem",
    "InvalidCommand",
    "MalformedScenario",
    "Navigate",
    "OutOfBounds",
    "PermissionDenied",
    "ROLES",
    "RemoveObject",
    "RotateItem",
    "Scenario",
    "ScenarioRepo",
    "SceneCommand",
    "SceneError",
    "SceneObject",
    "SceneState",
    "SetAttribute",
    "Transform",
    "TurnUser",
    "UnknownCatalogItem",
    "UnknownObject",
    "VARIANTS",
    "ZOOM_LADDER",
    "ZoomItem",
    "apply_command",
    "builtin_scenario_dir",
    "canonical_json",
    "catalog_from_dict",
    "catalog_to_dict",
    "command_from_dict",
    "command_to_dict",
    "digest",
    "digest_hex",
    "load_scenario",
    "load_scenario_file",
    "render_snapshot",
    "snapshot_bytes",
    "state_bytes",
    "state_from_dict",
    "state_to_dict",
    "variant_of",
]
