"""Append-only per-session event log, dataset export, and replay validation.

Layout on disk, one directory per session::

    <root>/<session_id>/
        events.jsonl        one event per line, seq 1..N gapless
        snapshots/v{V}.svg  scene snapshot at version V (written for messages)
        manifest.json       written once at seal
        export.jsonl        one line per dialogue turn (written by export)

Events are flushed as they are appended; the seal step fsyncs, so a sealed
log is durable and immutable. Export and replay only ever read sealed logs.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from wozlab.scene.commands import SceneCommand, apply_command, command_from_dict, command_to_dict
from wozlab.scene.model import Catalog, SceneState
from wozlab.scene.render import snapshot_bytes
from wozlab.scene.scenario import Scenario
from wozlab.scene.serialize import canonical_json, digest_hex, object_to_dict

LOG_FORMAT_VERSION = 1

EVENT_KINDS = ("message", "command", "system")


class LogError(Exception):
    """Base for event-log failures; ``code`` crosses the wire unchanged."""

    @property
    def code(self) -> str:
        return type(self).__name__


class SessionSealed(LogError):
    pass


class StorageFailure(LogError):
    pass


class UnknownSession(LogError):
    pass


class NotSealed(LogError):
    pass


class MalformedLog(LogError):
    pass


class DigestMismatch(LogError):
    pass


@dataclass(frozen=True)
class EventRecord:
    """One logged event. ``layout`` is the full object list at ``scene_version``."""

    seq: int
    ts_ms: int
    kind: str
    actor: str
    payload: dict
    scene_version: int
    layout: tuple[dict, ...]
    snapshot_ref: str | None = None

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "ts_ms": self.ts_ms,
            "kind": self.kind,
            "actor": self.actor,
            "payload": self.payload,
            "scene_version": self.scene_version,
            "layout": list(self.layout),
            "snapshot_ref": self.snapshot_ref,
        }


@dataclass(frozen=True)
class ExportTurn:
    """One dialogue turn with its multimodal context, as exported."""

    session_id: str
    turn_index: int
    speaker: str
    text: str
    scene_version: int
    layout: tuple[dict, ...]
    snapshot_ref: str
    elapsed_ms: int

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "turn_index": self.turn_index,
            "speaker": self.speaker,
            "text": self.text,
            "scene_version": self.scene_version,
            "layout": list(self.layout),
            "snapshot_ref": self.snapshot_ref,
            "elapsed_ms": self.elapsed_ms,
        }


def _layout_of(state: SceneState) -> tuple[dict, ...]:
    return tuple(object_to_dict(o) for o in state.objects)


class SessionLog:
    """Single-writer append log for one session.

    The caller (session coordinator) owns ordering; this class owns
    persistence, seq assignment, and snapshot files.
    """

    def __init__(
        self,
        root: str | Path,
        session_id: str,
        *,
        scenario_id: str,
        mode: str,
        roles: dict[str, str],
        catalog: Catalog,
        started_at_ms: int,
    ):
        self.session_id = session_id
        self.scenario_id = scenario_id
        self.mode = mode
        self.roles = dict(roles)
        self.started_at_ms = started_at_ms
        self._catalog = catalog
        self._seq = 0
        self._accepted_commands = 0
        self._messages = 0
        self._sealed = False
        self.directory = Path(root) / session_id
        try:
            (self.directory / "snapshots").mkdir(parents=True, exist_ok=True)
            self._events = open(self.directory / "events.jsonl", "xb")
        except OSError as exc:
            raise StorageFailure(f"cannot create session log: {exc}") from exc

    @property
    def sealed(self) -> bool:
        return self._sealed

    @property
    def event_count(self) -> int:
        return self._seq

    def _write(self, record: EventRecord) -> EventRecord:
        if self._sealed:
            raise SessionSealed(f"session {self.session_id} log is sealed")
        try:
            self._events.write(canonical_json(record.to_dict()) + b"\n")
            self._events.flush()
        except OSError as exc:
            raise StorageFailure(f"append failed: {exc}") from exc
        self._seq = record.seq
        return record

    def _write_snapshot(self, state: SceneState, seq: int) -> str:
        # One file per message record, keyed by seq; messages at the same
        # version duplicate bytes, which keeps file count == message count.
        ref = f"snapshots/e{seq}.svg"
        try:
            (self.directory / ref).write_bytes(snapshot_bytes(state, self._catalog))
        except OSError as exc:
            raise StorageFailure(f"snapshot write failed: {exc}") from exc
        return ref

    def append_message(self, *, ts_ms: int, actor: str, text: str, state: SceneState) -> EventRecord:
        if self._sealed:
            raise SessionSealed(f"session {self.session_id} log is sealed")
        # Snapshot must exist on disk before the record referencing it.
        ref = self._write_snapshot(state, self._seq + 1)
        record = EventRecord(
            seq=self._seq + 1,
            ts_ms=ts_ms,
            kind="message",
            actor=actor,
            payload={"text": text},
            scene_version=state.version,
            layout=_layout_of(state),
            snapshot_ref=ref,
        )
        self._write(record)
        self._messages += 1
        return record

    def append_command(
        self,
        *,
        ts_ms: int,
        actor: str,
        command: SceneCommand,
        state: SceneState,
        error: str | None = None,
        detail: str | None = None,
    ) -> EventRecord:
        """Log a command attempt. ``state`` is the post-apply state when
        accepted, the unchanged state when rejected."""
        if error is None:
            outcome: dict = {"accepted": True, "version": state.version}
        else:
            outcome = {"accepted": False, "error": error, "detail": detail or ""}
        record = EventRecord(
            seq=self._seq + 1,
            ts_ms=ts_ms,
            kind="command",
            actor=actor,
            payload={"command": command_to_dict(command), "outcome": outcome},
            scene_version=state.version,
            layout=_layout_of(state),
        )
        self._write(record)
        if error is None:
            self._accepted_commands += 1
        return record

    def append_system(self, *, ts_ms: int, note: str, state: SceneState) -> EventRecord:
        record = EventRecord(
            seq=self._seq + 1,
            ts_ms=ts_ms,
            kind="system",
            actor="server",
            payload={"note": note},
            scene_version=state.version,
            layout=_layout_of(state),
        )
        return self._write(record)

    def seal(self, *, ts_ms: int, outcome: str, final_state: SceneState) -> dict:
        """Close the log: fsync events, write the manifest. Idempotent calls
        are an error; a sealed log is immutable."""
        if self._sealed:
            raise SessionSealed(f"session {self.session_id} already sealed")
        manifest = {
            "fmt": LOG_FORMAT_VERSION,
            "session_id": self.session_id,
            "scenario_id": self.scenario_id,
            "mode": self.mode,
            "roles": self.roles,
            "outcome": outcome,
            "started_at_ms": self.started_at_ms,
            "sealed_at_ms": ts_ms,
            "event_count": self._seq,
            "message_count": self._messages,
            "accepted_command_count": self._accepted_commands,
            "final_version": final_state.version,
            "final_digest": digest_hex(final_state),
        }
        try:
            self._events.flush()
            os.fsync(self._events.fileno())
            self._events.close()
            manifest_path = self.directory / "manifest.json"
            with open(manifest_path, "wb") as fh:
                fh.write(canonical_json(manifest) + b"\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageFailure(f"seal failed: {exc}") from exc
        self._sealed = True
        return manifest

    def abort(self) -> None:
        """Best-effort close without seal, for storage-failure teardown."""
        try:
            self._events.close()
        except OSError:
            pass
        self._sealed = True


# --- reading side -----------------------------------------------------------

_RECORD_FIELDS = {
    "seq": int,
    "ts_ms": int,
    "kind": str,
    "actor": str,
    "payload": dict,
    "scene_version": int,
    "layout": list,
}


def _session_dir(root: str | Path, session_id: str) -> Path:
    directory = Path(root) / session_id
    if not directory.is_dir():
        raise UnknownSession(f"no log directory for session {session_id!r}")
    return directory


def read_manifest(root: str | Path, session_id: str) -> dict:
    directory = _session_dir(root, session_id)
    path = directory / "manifest.json"
    if not path.exists():
        raise NotSealed(f"session {session_id!r} has no manifest; not sealed")
    try:
        doc = json.loads(path.read_text("utf-8"))
    except (OSError, ValueError) as exc:
        raise MalformedLog(f"unreadable manifest: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("fmt") != LOG_FORMAT_VERSION:
        raise MalformedLog("manifest missing or wrong 'fmt'")
    return doc


def read_events(root: str | Path, session_id: str) -> list[EventRecord]:
    """Parse and structurally validate events.jsonl. Seq must run 1..N."""
    directory = _session_dir(root, session_id)
    path = directory / "events.jsonl"
    if not path.exists():
        raise MalformedLog(f"events file missing for session {session_id!r}")
    records: list[EventRecord] = []
    with open(path, "rb") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                raise MalformedLog(f"blank line {lineno} in events file")
            try:
                doc = json.loads(line)
            except ValueError as exc:
                raise MalformedLog(f"line {lineno}: invalid JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise MalformedLog(f"line {lineno}: record must be an object")
            for name, kind in _RECORD_FIELDS.items():
                value = doc.get(name)
                if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
                    raise MalformedLog(f"line {lineno}: field {name!r} missing or wrong type")
            if doc["kind"] not in EVENT_KINDS:
                raise MalformedLog(f"line {lineno}: unknown kind {doc['kind']!r}")
            if doc["seq"] != lineno:
                raise MalformedLog(f"line {lineno}: seq {doc['seq']} breaks gapless order")
            ref = doc.get("snapshot_ref")
            if ref is not None and not isinstance(ref, str):
                raise MalformedLog(f"line {lineno}: snapshot_ref must be string or null")
            if doc["kind"] == "message" and ref is None:
                raise MalformedLog(f"line {lineno}: message record lacks snapshot_ref")
            records.append(
                EventRecord(
                    seq=doc["seq"],
                    ts_ms=doc["ts_ms"],
                    kind=doc["kind"],
                    actor=doc["actor"],
                    payload=doc["payload"],
                    scene_version=doc["scene_version"],
                    layout=tuple(doc["layout"]),
                    snapshot_ref=ref,
                )
            )
    return records


def _accepted_command(record: EventRecord) -> SceneCommand | None:
    if record.kind != "command":
        return None
    outcome = record.payload.get("outcome")
    if not isinstance(outcome, dict) or outcome.get("accepted") is not True:
        return None
    try:
        return command_from_dict(record.payload["command"])
    except Exception as exc:
        raise MalformedLog(f"seq {record.seq}: unreplayable command: {exc}") from exc


def replay(scenario: Scenario, root: str | Path, session_id: str) -> str:
    """Re-apply every accepted command from the scenario's initial state.

    Returns the final digest (hex) and verifies it against the manifest.
    Any divergence raises DigestMismatch; structural trouble, MalformedLog.
    """
    manifest = read_manifest(root, session_id)
    if manifest.get("scenario_id") != scenario.scenario_id:
        raise MalformedLog(
            f"manifest scenario {manifest.get('scenario_id')!r} != {scenario.scenario_id!r}"
        )
    records = read_events(root, session_id)
    if len(records) != manifest.get("event_count"):
        raise MalformedLog(
            f"event count {len(records)} != manifest {manifest.get('event_count')}"
        )
    state = scenario.initial_state
    for record in records:
        command = _accepted_command(record)
        if command is None:
            continue
        state = apply_command(state, command, scenario.catalog, scenario.permissions)
        if state.version != record.payload["outcome"].get("version"):
            raise MalformedLog(
                f"seq {record.seq}: replayed version {state.version} != logged outcome"
            )
    if state.version != manifest.get("final_version"):
        raise DigestMismatch(
            f"replayed final version {state.version} != manifest {manifest.get('final_version')}"
        )
    got = digest_hex(state)
    if got != manifest.get("final_digest"):
        raise DigestMismatch(f"replayed digest {got} != manifest {manifest.get('final_digest')}")
    return got


def export_session(root: str | Path, session_id: str) -> Path:
    """Write export.jsonl: one line per message record, in seq order.

    Pure function of the sealed log, so exporting twice produces identical
    bytes. Returns the export file path.
    """
    manifest = read_manifest(root, session_id)
    records = read_events(root, session_id)
    directory = _session_dir(root, session_id)
    roles: dict = manifest.get("roles", {})
    started = manifest.get("started_at_ms", 0)
    turns: list[ExportTurn] = []
    for record in records:
        if record.kind != "message":
            continue
        turns.append(
            ExportTurn(
                session_id=session_id,
                turn_index=len(turns),
                speaker=roles.get(record.actor, record.actor),
                text=record.payload.get("text", ""),
                scene_version=record.scene_version,
                layout=record.layout,
                snapshot_ref=record.snapshot_ref or "",
                elapsed_ms=record.ts_ms - started,
            )
        )
    out = directory / "export.jsonl"
    try:
        with open(out, "wb") as fh:
            for turn in turns:
                fh.write(canonical_json(turn.to_dict()) + b"\n")
    except OSError as exc:
        raise StorageFailure(f"export write failed: {exc}") from exc
    return out
