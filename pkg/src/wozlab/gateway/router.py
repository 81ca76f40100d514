"""Connection-level protocol logic, independent of the byte transport.

The :class:`Hub` owns the coordinator plus one lock; every mutating call
from any connection or the timer goes through that lock, which realizes
the single-writer discipline the lower layers assume. A :class:`Connection`
is the per-channel state machine: Hello authentication, inbound msg_id
monotonicity, request dispatch, and error mapping.

Transports only need to implement :class:`Channel`: deliver bytes in,
accept framed bytes out.
"""
from __future__ import annotations

import logging
import threading
from typing import Protocol

from wozlab.agents import AgentRegistration, DuplicateAgentId
from wozlab.eventlog import LogError
from wozlab.scene.commands import command_from_dict
from wozlab.scene.errors import InvalidCommand, SceneError
from wozlab.session import Coordinator, CoordinationError, Outgoing
from wozlab.gateway.wire import DecodeError, FrameReader, WireMessage, encode

log = logging.getLogger("wozlab.gateway")

CONNECTABLE_ROLES = ("user", "wizard", "agent")

# Client-to-server vocabulary; everything else inbound is a protocol error.
_CLIENT_TYPES = frozenset(
    {
        "Hello",
        "AgentRegister",
        "EnqueueRequest",
        "SessionStartAck",
        "Chat",
        "CommandRequest",
        "ResyncRequest",
        "SessionEnd",
        "Ping",
        "Pong",
        "Error",
    }
)


class Channel(Protocol):
    def send_bytes(self, data: bytes) -> None: ...

    def close(self) -> None: ...


class CloseConnection(Exception):
    """Raised by a connection to ask its transport to hang up."""


class Hub:
    """Shared server core: coordinator, lock, live channel registry."""

    def __init__(self, coordinator: Coordinator):
        self.coordinator = coordinator
        self.lock = threading.RLock()
        self._connections: dict[str, "Connection"] = {}

    def new_connection(self, channel: Channel) -> "Connection":
        return Connection(self, channel)

    # Called with the lock held.
    def _bind(self, connection: "Connection") -> None:
        participant_id = connection.participant_id
        old = self._connections.get(participant_id)
        if old is not None and old is not connection:
            old.supersede()
        self._connections[participant_id] = connection

    def _unbind(self, connection: "Connection") -> None:
        participant_id = connection.participant_id
        if participant_id and self._connections.get(participant_id) is connection:
            del self._connections[participant_id]

    def _deliver(self, outgoing: list[Outgoing]) -> None:
        for item in outgoing:
            connection = self._connections.get(item.participant_id)
            if connection is None:
                continue  # offline: scene is recoverable via resync later
            connection.send(item.type, item.payload, item.session_id)

    def pump(self) -> None:
        """Drain the coordinator outbox to live channels. Lock must be held."""
        self._deliver(self.coordinator.drain())

    def tick(self) -> None:
        with self.lock:
            self.coordinator.tick()
            self.pump()


class Connection:
    """One client channel: framing, authentication, dispatch."""

    def __init__(self, hub: Hub, channel: Channel):
        self.hub = hub
        self.channel = channel
        self.participant_id: str | None = None
        self.role: str | None = None
        self._reader = FrameReader()
        self._next_out = 0
        self._last_in = -1
        self._send_lock = threading.Lock()
        self._open = True

    # -- outbound -------------------------------------------------------

    def send(self, type_: str, payload: dict, session_id: str | None = None) -> None:
        with self._send_lock:
            if not self._open:
                return
            message = WireMessage(
                type=type_, msg_id=self._next_out, payload=payload, session_id=session_id
            )
            self._next_out += 1
            data = encode(message)
        try:
            self.channel.send_bytes(data)
        except OSError:
            self.closed()

    def send_error(self, code: str, detail: str, session_id: str | None = None) -> None:
        self.send("Error", {"code": code, "detail": detail}, session_id)

    def supersede(self) -> None:
        """A newer channel took over this participant identity."""
        self.send_error("Superseded", "another connection took over this participant id")
        self._open = False
        try:
            self.channel.close()
        except OSError:
            pass

    # -- inbound --------------------------------------------------------

    def on_bytes(self, data: bytes) -> None:
        """Feed raw transport bytes. Raises CloseConnection when the
        framing broke and the transport should hang up."""
        try:
            messages = self._reader.feed(data)
        except DecodeError as err:
            self.send_error("DecodeError", str(err))
            raise CloseConnection() from err
        for message in messages:
            self.on_message(message)

    def on_message(self, message: WireMessage) -> None:
        if message.msg_id <= self._last_in:
            self.send_error(
                "BadMsgId",
                f"msg_id {message.msg_id} not greater than {self._last_in}",
            )
            return
        self._last_in = message.msg_id
        try:
            with self.hub.lock:
                self._dispatch(message)
                self.hub.pump()
        except CloseConnection:
            raise
        except Exception:
            log.exception("unhandled error while routing %s", message.type)
            self.send_error("InternalError", f"failed to process {message.type}")

    def closed(self) -> None:
        """Transport reports the channel is gone."""
        self._open = False
        with self.hub.lock:
            if self.participant_id is not None:
                self.hub.coordinator.disconnect(self.participant_id)
            self.hub._unbind(self)

    # -- dispatch -------------------------------------------------------

    def _dispatch(self, message: WireMessage) -> None:
        type_ = message.type
        if type_ not in _CLIENT_TYPES:
            if message.known:
                self.send_error("UnexpectedMessage", f"{type_} is server-to-client only")
            else:
                self.send_error("UnknownType", f"unknown message type {type_!r}")
            return
        if type_ == "Error":
            log.warning("client error from %s: %s", self.participant_id, message.payload)
            return
        if type_ == "Hello":
            self._handle_hello(message)
            return
        if self.participant_id is None:
            self.send_error("NotAuthenticated", "Hello required before anything else")
            return
        self.hub.coordinator.note_activity(self.participant_id)
        handler = {
            "AgentRegister": self._handle_agent_register,
            "EnqueueRequest": self._handle_enqueue,
            "SessionStartAck": self._handle_start_ack,
            "Chat": self._handle_chat,
            "CommandRequest": self._handle_command,
            "ResyncRequest": self._handle_resync,
            "SessionEnd": self._handle_session_end,
            "Ping": self._handle_ping,
            "Pong": lambda _message: None,
        }[type_]
        try:
            handler(message)
        except (CoordinationError, LogError) as err:
            self.send_error(err.code, str(err), message.session_id)
        except SceneError as err:
            self.send_error(err.code, str(err), message.session_id)

    def _handle_hello(self, message: WireMessage) -> None:
        participant_id = message.payload.get("participant_id")
        role = message.payload.get("role")
        if not isinstance(participant_id, str) or not participant_id:
            self.send_error("BadHello", "participant_id must be a non-empty string")
            return
        if role not in CONNECTABLE_ROLES:
            self.send_error("BadHello", f"role must be one of {CONNECTABLE_ROLES}")
            return
        try:
            self.hub.coordinator.connect(participant_id, role)
        except CoordinationError as err:
            self.send_error(err.code, str(err))
            return
        self.participant_id = participant_id
        self.role = role
        self.hub._bind(self)
        self.send(
            "Hello",
            {
                "participant_id": participant_id,
                "role": role,
                "scenarios": sorted(self.hub.coordinator.scenarios.ids()),
                "topology": self.hub.coordinator.topology,
            },
        )
        session = self.hub.coordinator.session_for(participant_id)
        if session is not None and session.phase in ("forming", "active"):
            # Reconnected mid-session: hand back the session context so the
            # client can rebuild its replica and resync.
            scenario = self.hub.coordinator.scenarios.get(session.scenario_id)
            self.send(
                "SessionStart",
                self.hub.coordinator._session_start_payload(session, scenario, participant_id),
                session.session_id,
            )

    def _handle_agent_register(self, message: WireMessage) -> None:
        if self.role != "agent":
            self.send_error("NotAnAgent", "AgentRegister requires an agent Hello")
            return
        capacity = message.payload.get("capacity", 1)
        scenario_ids = message.payload.get("scenario_ids", [])
        if not isinstance(capacity, int) or isinstance(capacity, bool) or capacity < 1:
            self.send_error("BadRegistration", "capacity must be a positive integer")
            return
        if not isinstance(scenario_ids, list) or not all(
            isinstance(s, str) for s in scenario_ids
        ):
            self.send_error("BadRegistration", "scenario_ids must be a list of strings")
            return
        registration = AgentRegistration(
            agent_id=self.participant_id,
            capacity=capacity,
            scenario_ids=tuple(scenario_ids),
        )
        registry = self.hub.coordinator.agents
        try:
            registry.register(registration)
        except DuplicateAgentId as err:
            self.send_error(err.code, str(err))
            return
        self.send(
            "AgentRegister",
            {
                "agent_id": registration.agent_id,
                "capacity": registration.capacity,
                "scenario_ids": list(registration.scenario_ids),
            },
        )
        # A fresh agent may already have users waiting.
        for scenario_id in self.hub.coordinator.scenarios.ids():
            if registration.supports(scenario_id):
                while self.hub.coordinator.try_match(scenario_id, "evaluation"):
                    pass

    def _handle_enqueue(self, message: WireMessage) -> None:
        scenario_id = message.payload.get("scenario_id")
        if not isinstance(scenario_id, str):
            self.send_error("BadRequest", "scenario_id must be a string")
            return
        mode = message.payload.get("mode")
        if mode is not None and mode not in ("collection", "evaluation"):
            self.send_error("BadRequest", f"unknown mode {mode!r}")
            return
        position = self.hub.coordinator.enqueue(self.participant_id, scenario_id)
        self.send("EnqueueRequest", {"scenario_id": scenario_id, "position": position})
        self.hub.coordinator.try_match(scenario_id, mode)

    def _require_session_id(self, message: WireMessage) -> str | None:
        if message.session_id is None:
            self.send_error("MissingSession", f"{message.type} requires a session_id")
            return None
        return message.session_id

    def _handle_start_ack(self, message: WireMessage) -> None:
        session_id = self._require_session_id(message)
        if session_id is not None:
            self.hub.coordinator.ack_start(session_id, self.participant_id)

    def _handle_chat(self, message: WireMessage) -> None:
        session_id = self._require_session_id(message)
        if session_id is None:
            return
        text = message.payload.get("text")
        if not isinstance(text, str):
            self.send_error("BadRequest", "chat text must be a string", session_id)
            return
        self.hub.coordinator.route_chat(session_id, self.participant_id, text)

    def _handle_command(self, message: WireMessage) -> None:
        session_id = self._require_session_id(message)
        if session_id is None:
            return
        raw = message.payload.get("command")
        if not isinstance(raw, dict):
            self.send_error("BadRequest", "command must be an object", session_id)
            return
        try:
            command = command_from_dict(raw)
        except InvalidCommand as err:
            # Unparseable commands still get the Rejection shape so the
            # request/answer pairing holds for every CommandRequest.
            session = self.hub.coordinator.sessions.get(session_id)
            version = session.sync.version if session is not None else 0
            self.send(
                "Rejection",
                {"error": err.code, "detail": str(err), "version": version, "command": raw},
                session_id,
            )
            return
        self.hub.coordinator.submit_command(session_id, self.participant_id, command)

    def _handle_resync(self, message: WireMessage) -> None:
        session_id = self._require_session_id(message)
        if session_id is None:
            return
        last_good = message.payload.get("last_good_version")
        if not isinstance(last_good, int) or isinstance(last_good, bool) or last_good < 0:
            self.send_error("BadRequest", "last_good_version must be a non-negative integer", session_id)
            return
        self.hub.coordinator.resync(session_id, self.participant_id, last_good)

    def _handle_session_end(self, message: WireMessage) -> None:
        session_id = self._require_session_id(message)
        if session_id is not None:
            self.hub.coordinator.end_session(session_id, self.participant_id)

    def _handle_ping(self, message: WireMessage) -> None:
        version = 0
        session = self.hub.coordinator.session_for(self.participant_id)
        if session is not None:
            version = session.sync.version
            acked = message.payload.get("version")
            if isinstance(acked, int) and not isinstance(acked, bool) and 0 <= acked <= version:
                session.sync.ack(self.participant_id, acked)
        self.send("Pong", {"version": version}, message.session_id)
