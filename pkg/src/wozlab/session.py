"""Matchmaking and session lifecycle coordination.

A single :class:`Coordinator` owns every queue, session, authoritative
scene, and event log on a server. All mutating calls are meant to be
serialized by the caller (the gateway wraps the coordinator in one lock;
tests call it directly), which makes per-session ordering total and the
whole machine deterministic given a deterministic clock.

The coordinator never touches sockets. Deliveries are emitted as
:class:`Outgoing` items into an outbox the transport layer drains after
each call; time enters only through the injected millisecond clock.

Seat naming: wire payloads describe the two sides as the "user" and
"wizard" seats regardless of whether the second seat is staffed by a human
or a programmatic agent, so an agent's view of a session is byte-compatible
with a human wizard's.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from wozlab.agents import AgentRegistry
from wozlab.eventlog import SessionLog, StorageFailure
from wozlab.scene.commands import SceneCommand, command_to_dict
from wozlab.scene.errors import InvalidCommand, SceneError
from wozlab.scene.render import render_snapshot
from wozlab.scene.scenario import ScenarioRepo
from wozlab.scene.serialize import catalog_to_dict, state_to_dict
from wozlab.sync import (
    DEFAULT_FULL_STATE_GAP,
    DEFAULT_RETENTION,
    SessionSync,
    VersionAhead,
)

MODES = ("collection", "evaluation")
PHASES = ("forming", "active", "completed", "abandoned")
_LEGAL_TRANSITIONS = {
    ("forming", "active"),
    ("forming", "abandoned"),
    ("active", "completed"),
    ("active", "abandoned"),
}

DEFAULT_DISCONNECT_TIMEOUT_MS = 60_000
DEFAULT_AGENT_TURN_TIMEOUT_MS = 30_000


class CoordinationError(Exception):
    """Base for matchmaking/lifecycle failures; ``code`` crosses the wire."""

    @property
    def code(self) -> str:
        return type(self).__name__


class AlreadyEnqueued(CoordinationError):
    pass


class AlreadyInSession(CoordinationError):
    pass


class IllegalTransition(CoordinationError):
    pass


class SessionNotActive(CoordinationError):
    pass


class NotAParticipant(CoordinationError):
    pass


class EmptyMessage(CoordinationError):
    pass


class UnknownSession(CoordinationError):
    pass


class UnknownScenario(CoordinationError):
    pass


class UnknownParticipant(CoordinationError):
    pass


class IdentityConflict(CoordinationError):
    pass


@dataclass
class Participant:
    participant_id: str
    role: str  # user | wizard | agent
    connected: bool = True
    last_seen_ms: int = 0


@dataclass(frozen=True)
class Outgoing:
    """One message the transport should deliver to one participant."""

    participant_id: str
    type: str
    payload: dict
    session_id: str | None = None


@dataclass
class Session:
    session_id: str
    mode: str
    scenario_id: str
    phase: str
    user_id: str
    peer_id: str  # wizard or agent participant
    sync: SessionSync
    log: SessionLog
    created_ms: int
    ended_ms: int | None = None
    acks: set[str] = field(default_factory=set)
    agent_deadline_ms: int | None = None

    @property
    def participant_ids(self) -> tuple[str, str]:
        return (self.user_id, self.peer_id)

    def seat_of(self, participant_id: str) -> str:
        if participant_id == self.user_id:
            return "user"
        if participant_id == self.peer_id:
            return "wizard"
        raise NotAParticipant(f"{participant_id!r} is not in session {self.session_id}")

    def peer_of(self, participant_id: str) -> str:
        self.seat_of(participant_id)
        return self.peer_id if participant_id == self.user_id else self.user_id


class Coordinator:
    """Single-writer owner of queues, sessions, scenes, and logs."""

    def __init__(
        self,
        scenarios: ScenarioRepo,
        log_root,
        *,
        clock: Callable[[], int] | None = None,
        topology: str = "local_render",
        default_mode: str = "collection",
        disconnect_timeout_ms: int = DEFAULT_DISCONNECT_TIMEOUT_MS,
        agent_turn_timeout_ms: int = DEFAULT_AGENT_TURN_TIMEOUT_MS,
        retention: int = DEFAULT_RETENTION,
        full_state_gap: int = DEFAULT_FULL_STATE_GAP,
    ):
        if default_mode not in MODES:
            raise ValueError(f"unknown mode {default_mode!r}")
        self.scenarios = scenarios
        self.log_root = log_root
        self.clock = clock or (lambda: time.time_ns() // 1_000_000)
        self.topology = topology
        self.default_mode = default_mode
        self.disconnect_timeout_ms = disconnect_timeout_ms
        self.agent_turn_timeout_ms = agent_turn_timeout_ms
        self.retention = retention
        self.full_state_gap = full_state_gap
        self.agents = AgentRegistry()
        self.participants: dict[str, Participant] = {}
        self.sessions: dict[str, Session] = {}
        self._queues: dict[tuple[str, str], deque[str]] = {}
        self._queue_of: dict[str, tuple[str, str]] = {}
        self._session_of: dict[str, str] = {}
        self._next_session = 0
        self._outbox: list[Outgoing] = []

    # -- outbox ---------------------------------------------------------

    def drain(self) -> list[Outgoing]:
        out, self._outbox = self._outbox, []
        return out

    def _send(self, participant_id: str, type_: str, payload: dict, session_id: str | None = None):
        self._outbox.append(Outgoing(participant_id, type_, payload, session_id))

    # -- participants ---------------------------------------------------

    def connect(self, participant_id: str, role: str) -> Participant:
        """Bind (or re-bind after a reconnect) a participant identity."""
        existing = self.participants.get(participant_id)
        if existing is not None:
            if existing.role != role:
                raise IdentityConflict(
                    f"{participant_id!r} already known with role {existing.role!r}"
                )
            existing.connected = True
            existing.last_seen_ms = self.clock()
            return existing
        participant = Participant(participant_id, role, last_seen_ms=self.clock())
        self.participants[participant_id] = participant
        return participant

    def disconnect(self, participant_id: str) -> None:
        """Transport lost. The session survives until the disconnect timeout
        so the participant can reconnect and resync."""
        participant = self.participants.get(participant_id)
        if participant is not None:
            participant.connected = False

    def note_activity(self, participant_id: str) -> None:
        participant = self.participants.get(participant_id)
        if participant is not None:
            participant.last_seen_ms = self.clock()

    def _require_participant(self, participant_id: str) -> Participant:
        participant = self.participants.get(participant_id)
        if participant is None:
            raise UnknownParticipant(f"unknown participant {participant_id!r}")
        return participant

    # -- matchmaking ----------------------------------------------------

    def enqueue(self, participant_id: str, scenario_id: str) -> int:
        participant = self._require_participant(participant_id)
        if scenario_id not in self.scenarios.ids():
            raise UnknownScenario(f"unknown scenario {scenario_id!r}")
        if participant_id in self._queue_of:
            raise AlreadyEnqueued(f"{participant_id!r} is already waiting")
        if participant_id in self._session_of:
            raise AlreadyInSession(f"{participant_id!r} is already in a session")
        key = (participant.role, scenario_id)
        queue = self._queues.setdefault(key, deque())
        queue.append(participant_id)
        self._queue_of[participant_id] = key
        return len(queue)

    def _pop_queued(self, role: str, scenario_id: str) -> str | None:
        queue = self._queues.get((role, scenario_id))
        if not queue:
            return None
        participant_id = queue.popleft()
        self._queue_of.pop(participant_id, None)
        return participant_id

    def queue_length(self, role: str, scenario_id: str) -> int:
        return len(self._queues.get((role, scenario_id), ()))

    def queued_participants(self) -> set[str]:
        return set(self._queue_of)

    def try_match(self, scenario_id: str, mode: str | None = None) -> Session | None:
        """Form one session if a compatible pair is waiting; else nothing."""
        mode = mode or self.default_mode
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        user_queue = self._queues.get(("user", scenario_id))
        if not user_queue:
            return None
        if mode == "collection":
            wizard_queue = self._queues.get(("wizard", scenario_id))
            if not wizard_queue:
                return None
            user_id = self._pop_queued("user", scenario_id)
            peer_id = self._pop_queued("wizard", scenario_id)
        else:
            agent_id = self.agents.acquire(scenario_id)
            if agent_id is None:
                return None
            user_id = self._pop_queued("user", scenario_id)
            peer_id = agent_id
        return self._create_session(scenario_id, mode, user_id, peer_id)

    def _create_session(self, scenario_id: str, mode: str, user_id: str, peer_id: str) -> Session:
        scenario = self.scenarios.get(scenario_id)
        session_id = f"s{self._next_session}"
        self._next_session += 1
        now = self.clock()
        sync = SessionSync(
            session_id,
            scenario,
            topology=self.topology,
            retention=self.retention,
            full_state_gap=self.full_state_gap,
        )
        log = SessionLog(
            self.log_root,
            session_id,
            scenario_id=scenario_id,
            mode=mode,
            roles={user_id: "user", peer_id: "wizard"},
            catalog=scenario.catalog,
            started_at_ms=now,
        )
        session = Session(
            session_id=session_id,
            mode=mode,
            scenario_id=scenario_id,
            phase="forming",
            user_id=user_id,
            peer_id=peer_id,
            sync=sync,
            log=log,
            created_ms=now,
        )
        self.sessions[session_id] = session
        for participant_id in session.participant_ids:
            self._session_of[participant_id] = session_id
            sync.attach_replica(participant_id)
            self._send(
                participant_id,
                "SessionStart",
                self._session_start_payload(session, scenario, participant_id),
                session_id,
            )
        return session

    def _session_start_payload(self, session: Session, scenario, participant_id: str) -> dict:
        seat = session.seat_of(participant_id)
        payload = {
            "scenario_id": session.scenario_id,
            "topology": session.sync.topology,
            "seat": seat,
            "peer_seat": "wizard" if seat == "user" else "user",
            "state": state_to_dict(session.sync.state),
            "catalog": catalog_to_dict(session.sync.catalog),
            "permissions": {
                variant: sorted(roles) for variant, roles in scenario.permissions.items()
            },
        }
        if session.sync.topology == "remote_render":
            payload["snapshot"] = render_snapshot(session.sync.state, session.sync.catalog)
        return payload

    # -- lifecycle ------------------------------------------------------

    def _require_session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"unknown session {session_id!r}")
        return session

    def session_for(self, participant_id: str) -> Session | None:
        session_id = self._session_of.get(participant_id)
        return self.sessions.get(session_id) if session_id else None

    def ack_start(self, session_id: str, participant_id: str) -> None:
        session = self._require_session(session_id)
        session.seat_of(participant_id)  # NotAParticipant for outsiders
        if session.phase != "forming":
            raise IllegalTransition(f"ack in phase {session.phase}")
        session.acks.add(participant_id)
        if set(session.participant_ids) <= session.acks:
            self.transition(session_id, "active")

    def transition(self, session_id: str, new_phase: str) -> Session:
        session = self._require_session(session_id)
        if (session.phase, new_phase) not in _LEGAL_TRANSITIONS:
            raise IllegalTransition(f"{session.phase} -> {new_phase} is not allowed")
        if new_phase == "active" and set(session.participant_ids) > session.acks:
            raise IllegalTransition("forming -> active requires both session-start acks")
        session.phase = new_phase
        if new_phase == "active":
            self._on_activated(session)
        elif new_phase in ("completed", "abandoned"):
            self._on_ended(session, new_phase)
        return session

    def _on_activated(self, session: Session) -> None:
        note = "session active"
        session.log.append_system(ts_ms=self.clock(), note=note, state=session.sync.state)
        for participant_id in session.participant_ids:
            self._send(
                participant_id,
                "Chat",
                {"seat": "system", "text": note, "scene_version": session.sync.version},
                session.session_id,
            )

    def _on_ended(self, session: Session, phase: str, reason: str | None = None) -> None:
        session.ended_ms = self.clock()
        if not session.log.sealed:
            session.log.seal(
                ts_ms=session.ended_ms, outcome=phase, final_state=session.sync.state
            )
        for participant_id in session.participant_ids:
            self._session_of.pop(participant_id, None)
            self._send(
                participant_id,
                "SessionEnd",
                {"phase": phase, "reason": reason or phase},
                session.session_id,
            )
        if session.mode == "evaluation":
            self.agents.release(session.peer_id)

    def end_session(self, session_id: str, participant_id: str) -> None:
        """Graceful completion requested by either participant."""
        session = self._require_session(session_id)
        session.seat_of(participant_id)
        if session.phase != "active":
            raise SessionNotActive(f"session {session_id} is {session.phase}")
        self.transition(session_id, "completed")

    def abandon(self, session_id: str, note: str) -> None:
        """Abnormal termination (timeouts, storage trouble, operator)."""
        session = self._require_session(session_id)
        if session.phase in ("completed", "abandoned"):
            return
        if session.phase == "active" and not session.log.sealed:
            try:
                session.log.append_system(ts_ms=self.clock(), note=note, state=session.sync.state)
            except StorageFailure:
                session.log.abort()
        session.phase = "abandoned"
        self._on_ended(session, "abandoned", reason=note)

    # -- chat and commands ----------------------------------------------

    def route_chat(self, session_id: str, sender_id: str, text: str) -> None:
        session = self._require_session(session_id)
        seat = session.seat_of(sender_id)
        if session.phase != "active":
            raise SessionNotActive(f"session {session_id} is {session.phase}")
        trimmed = text.strip()
        if not trimmed:
            raise EmptyMessage("message is empty after trimming")
        session.log.append_message(
            ts_ms=self.clock(), actor=sender_id, text=trimmed, state=session.sync.state
        )
        self._send(
            session.peer_of(sender_id),
            "Chat",
            {"seat": seat, "text": trimmed, "scene_version": session.sync.version},
            session_id,
        )
        if session.mode == "evaluation":
            if seat == "user":
                session.agent_deadline_ms = self.clock() + self.agent_turn_timeout_ms
            else:
                session.agent_deadline_ms = None

    def submit_command(self, session_id: str, issuer_id: str, command: SceneCommand) -> None:
        session = self._require_session(session_id)
        seat = session.seat_of(issuer_id)
        if session.phase != "active":
            raise SessionNotActive(f"session {session_id} is {session.phase}")
        try:
            if command.issuer_role != seat:
                raise InvalidCommand(
                    f"command claims role {command.issuer_role!r} but issuer holds the {seat} seat"
                )
            delta = session.sync.submit(command)
        except SceneError as err:
            session.log.append_command(
                ts_ms=self.clock(),
                actor=issuer_id,
                command=command,
                state=session.sync.state,
                error=err.code,
                detail=str(err),
            )
            self._send(
                issuer_id,
                "Rejection",
                {
                    "error": err.code,
                    "detail": str(err),
                    "version": session.sync.version,
                    "command": command_to_dict(command),
                },
                session_id,
            )
            return
        session.log.append_command(
            ts_ms=self.clock(), actor=issuer_id, command=command, state=session.sync.state
        )
        payload = {
            "version": delta.version,
            "command": command_to_dict(delta.command),
            "post_digest": delta.post_digest.hex(),
        }
        if delta.snapshot is not None:
            payload["snapshot"] = delta.snapshot
        for participant_id in session.participant_ids:
            self._send(participant_id, "Delta", payload, session_id)
        if session.mode == "evaluation" and seat == "wizard":
            session.agent_deadline_ms = None

    def resync(self, session_id: str, participant_id: str, last_good_version: int) -> None:
        session = self._require_session(session_id)
        session.seat_of(participant_id)
        try:
            plan = session.sync.resync(last_good_version)
        except VersionAhead as err:
            self._send(
                participant_id,
                "Error",
                {"code": "VersionAhead", "detail": str(err)},
                session_id,
            )
            self._send_full_state(session, participant_id, session.sync.full_plan())
            return
        session.sync.ack(participant_id, last_good_version)
        if plan.kind == "full":
            self._send_full_state(session, participant_id, plan)
            return
        self._send(
            participant_id,
            "ResyncBatch",
            {
                "from_version": last_good_version,
                "deltas": [
                    {
                        "version": d.version,
                        "command": command_to_dict(d.command),
                        "post_digest": d.post_digest.hex(),
                        **({"snapshot": d.snapshot} if d.snapshot is not None else {}),
                    }
                    for d in plan.deltas
                ],
            },
            session_id,
        )

    def _send_full_state(self, session: Session, participant_id: str, plan) -> None:
        payload = {
            "version": session.sync.version,
            "state": state_to_dict(plan.state),
            "digest": (plan.state_digest or b"").hex(),
        }
        if plan.snapshot is not None:
            payload["snapshot"] = plan.snapshot
        self._send(participant_id, "FullState", payload, session.session_id)

    # -- time -----------------------------------------------------------

    def tick(self) -> None:
        """Run timeout policies. Call periodically and after clock changes."""
        now = self.clock()
        for session in list(self.sessions.values()):
            if session.phase not in ("forming", "active"):
                continue
            for participant_id in session.participant_ids:
                participant = self.participants.get(participant_id)
                if participant is None:
                    continue
                if session.mode == "evaluation" and participant_id == session.peer_id:
                    continue  # agents are governed by the turn deadline
                if now - participant.last_seen_ms > self.disconnect_timeout_ms:
                    self.abandon(
                        session.session_id,
                        f"participant {participant_id} silent beyond disconnect timeout",
                    )
                    break
            if session.phase != "active":
                continue
            if (
                session.mode == "evaluation"
                and session.agent_deadline_ms is not None
                and now > session.agent_deadline_ms
            ):
                self.abandon(session.session_id, "AgentTimeout: agent missed the turn deadline")
