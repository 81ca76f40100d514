"""Socket client for the framed protocol, plus the agent runner.

:class:`WireClient` is a deliberately small synchronous helper: send one
message, pull replies with a timeout. Tests and the bundled agent build
on it; browsers use the TypeScript client instead.
"""
from __future__ import annotations

import logging
import socket
from collections import deque

from wozlab.agents import BRAINS, Do, Say
from wozlab.gateway.wire import FrameReader, WireMessage, encode
from wozlab.scene.commands import command_to_dict
from wozlab.scene.serialize import catalog_from_dict, state_from_dict
from wozlab.sync import Delta, Replica

log = logging.getLogger("wozlab.client")


class WireTimeout(Exception):
    pass


class WireClient:
    def __init__(self, host: str, port: int, *, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.timeout = timeout
        self._reader = FrameReader()
        self._inbox: deque[WireMessage] = deque()
        self._next_msg_id = 0

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass

    def send(self, type_: str, payload: dict | None = None, session_id: str | None = None) -> int:
        msg_id = self._next_msg_id
        self._next_msg_id += 1
        message = WireMessage(
            type=type_, msg_id=msg_id, payload=payload or {}, session_id=session_id
        )
        self.sock.sendall(encode(message))
        return msg_id

    def send_raw(self, data: bytes) -> None:
        self.sock.sendall(data)

    def recv(self, timeout: float | None = None) -> WireMessage:
        """Next message, waiting up to ``timeout`` (client default if None)."""
        if self._inbox:
            return self._inbox.popleft()
        self.sock.settimeout(timeout if timeout is not None else self.timeout)
        while not self._inbox:
            try:
                data = self.sock.recv(65536)
            except (socket.timeout, TimeoutError):
                raise WireTimeout("no message within timeout") from None
            if not data:
                raise ConnectionError("server closed the connection")
            self._inbox.extend(self._reader.feed(data))
        return self._inbox.popleft()

    def recv_type(self, type_: str, timeout: float | None = None) -> WireMessage:
        """Skip forward to the next message of one type (others are queued
        behind it in arrival order for later recv calls)."""
        skipped: list[WireMessage] = []
        deadline_budget = timeout if timeout is not None else self.timeout
        while True:
            message = self.recv(deadline_budget)
            if message.type == type_:
                for m in reversed(skipped):
                    self._inbox.appendleft(m)
                return message
            skipped.append(message)

    def drain(self) -> list[WireMessage]:
        """Everything already buffered locally, without blocking."""
        out = list(self._inbox)
        self._inbox.clear()
        return out

    # -- convenience ----------------------------------------------------

    def hello(self, participant_id: str, role: str) -> WireMessage:
        self.send("Hello", {"participant_id": participant_id, "role": role})
        reply = self.recv()
        if reply.type == "Error":
            raise ConnectionError(f"hello refused: {reply.payload}")
        return reply


class AgentSessionState:
    """Per-session context the agent keeps while serving it."""

    def __init__(self, session_id: str, payload: dict):
        self.session_id = session_id
        self.topology = payload["topology"]
        self.catalog = catalog_from_dict(payload["catalog"])
        self.replica = Replica(state_from_dict(payload["state"]), self.catalog)
        self.version = self.replica.version

    def observe_delta(self, payload: dict) -> bool:
        # Deltas carry the command in both topologies, so the agent keeps a
        # verified replica even when humans would be watching snapshots.
        delta = Delta(
            session_id=self.session_id,
            version=payload["version"],
            command=_command_from_payload(payload),
            post_digest=bytes.fromhex(payload["post_digest"]),
        )
        ok = self.replica.verify_and_apply(delta)
        self.version = self.replica.version
        return ok


def _command_from_payload(payload: dict):
    from wozlab.scene.commands import command_from_dict

    return command_from_dict(payload["command"])


def run_agent(
    host: str,
    port: int,
    agent_id: str,
    *,
    brain_name: str = "rule",
    capacity: int = 1,
    scenario_ids: tuple[str, ...] = (),
    stop=None,
) -> None:
    """Connect, register, and serve sessions until ``stop`` (an Event-like
    with is_set) fires or the server goes away."""
    brain = BRAINS[brain_name]()
    client = WireClient(host, port)
    sessions: dict[str, AgentSessionState] = {}
    try:
        client.hello(agent_id, "agent")
        client.send(
            "AgentRegister", {"capacity": capacity, "scenario_ids": list(scenario_ids)}
        )
        ack = client.recv()
        if ack.type == "Error":
            raise ConnectionError(f"registration refused: {ack.payload}")
        log.info("agent %s registered (%s)", agent_id, brain_name)
        while stop is None or not stop.is_set():
            try:
                message = client.recv(timeout=0.5)
            except WireTimeout:
                continue
            _agent_step(client, brain, sessions, message)
    except ConnectionError as exc:
        log.info("agent %s disconnecting: %s", agent_id, exc)
    finally:
        client.close()


def _agent_step(client: WireClient, brain, sessions: dict, message: WireMessage) -> None:
    sid = message.session_id
    if message.type == "SessionStart" and sid is not None:
        sessions[sid] = AgentSessionState(sid, message.payload)
        client.send("SessionStartAck", {}, sid)
        return
    session = sessions.get(sid) if sid is not None else None
    if session is None:
        return
    if message.type == "Delta":
        if not session.observe_delta(message.payload):
            client.send("ResyncRequest", {"last_good_version": session.version}, sid)
        return
    if message.type == "ResyncBatch":
        for entry in message.payload.get("deltas", []):
            session.observe_delta(entry)
        return
    if message.type == "FullState":
        session.replica.load_full_state(
            state_from_dict(message.payload["state"]),
            bytes.fromhex(message.payload["digest"]),
        )
        session.version = session.replica.version
        return
    if message.type == "SessionEnd":
        sessions.pop(sid, None)
        return
    if message.type == "Chat" and message.payload.get("seat") == "user":
        actions = brain.respond(
            message.payload.get("text", ""), session.replica.state, session.catalog
        )
        for action in actions:
            if isinstance(action, Do):
                client.send("CommandRequest", {"command": command_to_dict(action.command)}, sid)
            elif isinstance(action, Say):
                client.send("Chat", {"text": action.text}, sid)
