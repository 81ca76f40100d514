"""Error types raised by scene operations.

Every error carries a stable ``code`` (the class name) that crosses the wire
unchanged, so clients and logs can match on it.
"""

from __future__ import annotations


class SceneError(Exception):
    """Base class for scene command and scenario failures."""

    @property
    def code(self) -> str:
        return type(self).__name__


class PermissionDenied(SceneError):
    """Issuer role is not allowed to use this command variant."""


class UnknownObject(SceneError):
    """Referenced object_id does not exist in the scene."""


class OutOfBounds(SceneError):
    """Navigation into a blocked/out-of-grid cell, placement outside the
    floor, or a zoom step past either end of the ladder."""


class UnknownCatalogItem(SceneError):
    """AddObject referenced an item_id the session catalog cannot resolve."""


class InvalidCommand(SceneError):
    """Command quantities violate the command vocabulary (rotation not a
    multiple of 15, zoom step outside {-1,+1}, malformed wire payload)."""


class MalformedScenario(SceneError):
    """Scenario document failed to parse or validate; message carries the
    offending field path."""
