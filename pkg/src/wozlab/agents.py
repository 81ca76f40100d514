"""Programmatic agents: server-side registry and client-side brains.

Registry: agents announce themselves once (id, capacity, scenarios) and are
then *matchable* for evaluation sessions; they are leased per session and
released when it ends, so one agent can serve many sessions over time.

Brains: pure decision functions from an observed chat message plus the
current replica state to a list of actions (say something / issue a scene
command). Keeping brains pure makes them trivially testable; the wire-side
driver that feeds them lives with the client code, not here.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from wozlab.scene.commands import FocusItem, RotateItem, SceneCommand, ZoomItem
from wozlab.scene.model import Catalog, SceneState


class DuplicateAgentId(Exception):
    @property
    def code(self) -> str:
        return type(self).__name__


class AgentTimeout(Exception):
    """Per-turn response deadline breached; the session is abandoned."""

    @property
    def code(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class AgentRegistration:
    agent_id: str
    capacity: int = 1
    scenario_ids: tuple[str, ...] = ()  # empty means any scenario

    def supports(self, scenario_id: str) -> bool:
        return not self.scenario_ids or scenario_id in self.scenario_ids


class AgentRegistry:
    """Live agent registrations with per-agent session leases."""

    def __init__(self) -> None:
        self._registrations: dict[str, AgentRegistration] = {}
        self._live: dict[str, int] = {}

    def register(self, registration: AgentRegistration) -> AgentRegistration:
        if registration.agent_id in self._registrations:
            raise DuplicateAgentId(f"agent id {registration.agent_id!r} already registered")
        if registration.capacity < 1:
            raise ValueError("capacity must be at least 1")
        self._registrations[registration.agent_id] = registration
        self._live[registration.agent_id] = 0
        return registration

    def unregister(self, agent_id: str) -> None:
        self._registrations.pop(agent_id, None)
        self._live.pop(agent_id, None)

    def registered(self, agent_id: str) -> bool:
        return agent_id in self._registrations

    def live_sessions(self, agent_id: str) -> int:
        return self._live.get(agent_id, 0)

    def acquire(self, scenario_id: str) -> str | None:
        """Lease the first registered agent that supports the scenario and
        has spare capacity; None when nobody qualifies."""
        for agent_id, registration in self._registrations.items():
            if registration.supports(scenario_id) and self._live[agent_id] < registration.capacity:
                self._live[agent_id] += 1
                return agent_id
        return None

    def release(self, agent_id: str) -> None:
        if self._live.get(agent_id, 0) > 0:
            self._live[agent_id] -= 1


# --- brains -----------------------------------------------------------------


@dataclass(frozen=True)
class Say:
    text: str


@dataclass(frozen=True)
class Do:
    command: SceneCommand


Action = Say | Do


class EchoBrain:
    """Minimal deterministic brain: repeats whatever the user said.

    Used by the dual-run harness, where the peer's exact behavior is
    scripted to match a human-wizard script.
    """

    def respond(self, text: str, state: SceneState, catalog: Catalog) -> list[Action]:
        return [Say(text)]


_ROTATE = re.compile(r"\b(?:rotate|turn|spin)\b", re.IGNORECASE)
_ZOOM_IN = re.compile(r"\bzoom in\b|\bcloser\b|\benlarge\b", re.IGNORECASE)
_ZOOM_OUT = re.compile(r"\bzoom out\b|\bfurther\b|\bsmaller\b", re.IGNORECASE)
_SHOW = re.compile(r"\b(?:show me|show|focus on|look at)\b", re.IGNORECASE)
_ASK_ATTR = re.compile(r"\b(color|colour|pattern|price)\b", re.IGNORECASE)


class RuleBrain:
    """Reference rule-based wizard stand-in.

    Understands three command patterns (rotate / zoom in-out / show me) and
    answers color, pattern, and price questions from the catalog. Object
    references resolve by object id ("o1"), category, or display name; when
    nothing matches, the focal object is the fallback subject.
    """

    greeting = "Hello! Ask me about the items, or tell me to rotate, zoom, or show one."

    def _resolve(self, text: str, state: SceneState, catalog: Catalog) -> str | None:
        lowered = text.lower()
        for obj in state.objects:
            if re.search(rf"\b{re.escape(obj.object_id)}\b", lowered):
                return obj.object_id
        for obj in state.objects:
            item = catalog.get(obj.item_id)
            if item.category.lower() in lowered or item.display_name.lower() in lowered:
                return obj.object_id
        if state.focal_object and state.find_object(state.focal_object):
            return state.focal_object
        return None

    def respond(self, text: str, state: SceneState, catalog: Catalog) -> list[Action]:
        subject = self._resolve(text, state, catalog)
        attr = _ASK_ATTR.search(text)
        if attr and ("?" in text or text.lower().startswith(("what", "which", "how"))):
            if subject is None:
                return [Say("Which item do you mean?")]
            obj = state.find_object(subject)
            item = catalog.get(obj.item_id)
            key = attr.group(1).lower().replace("colour", "color")
            if key == "price":
                dollars = item.price_cents // 100
                cents = item.price_cents % 100
                return [Say(f"The {item.display_name} costs ${dollars}.{cents:02d}.")]
            value = obj.attributes(catalog).get(key)
            if value is None:
                return [Say(f"The {item.display_name} has no {key} listed.")]
            return [Say(f"The {item.display_name}'s {key} is {value}.")]
        if subject is not None:
            obj = state.find_object(subject)
            item = catalog.get(obj.item_id)
            if _ROTATE.search(text):
                return [Do(RotateItem(subject, 90, "wizard")), Say(f"Rotating the {item.display_name}.")]
            if _ZOOM_IN.search(text):
                return [Do(ZoomItem(subject, 1, "wizard")), Say(f"Zooming in on the {item.display_name}.")]
            if _ZOOM_OUT.search(text):
                return [Do(ZoomItem(subject, -1, "wizard")), Say(f"Zooming out from the {item.display_name}.")]
            if _SHOW.search(text):
                return [Do(FocusItem(subject, "wizard")), Say(f"Here is the {item.display_name}.")]
        return [Say("I can rotate, zoom, or show items, and answer color, pattern, or price questions.")]


BRAINS = {"echo": EchoBrain, "rule": RuleBrain}
