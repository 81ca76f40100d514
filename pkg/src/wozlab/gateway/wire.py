"""Wire envelope and length-delimited frame codec.

Every message travels as one frame::

    <decimal byte length of body>\\n<body>\\n

where the body is the canonical JSON of the envelope.  The same framing is
used on raw TCP sockets and inside WebSocket text messages, so client and
server logic never cares which transport carried the bytes.

The codec is deliberately forgiving on *content* (an envelope with an
unrecognized ``type`` decodes fine; routing decides what to do with it) and
strict on *form* (bad length prefixes, truncated bodies, or non-object JSON
raise :class:`DecodeError` with a byte offset for diagnostics).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from wozlab.scene.serialize import canonical_json

# Message vocabulary. Anything else decodes but is flagged unknown.
MESSAGE_TYPES: frozenset[str] = frozenset(
    {
        "Hello",
        "AgentRegister",
        "EnqueueRequest",
        "SessionStart",
        "SessionStartAck",
        "Chat",
        "CommandRequest",
        "Delta",
        "Rejection",
        "ResyncRequest",
        "ResyncBatch",
        "FullState",
        "SessionEnd",
        "Ping",
        "Pong",
        "Error",
    }
)

# Hard ceiling on a single frame body. Generous for snapshots, small enough
# that a hostile length prefix cannot make us preallocate gigabytes.
MAX_FRAME_BYTES = 8 * 1024 * 1024
_MAX_LENGTH_DIGITS = len(str(MAX_FRAME_BYTES))


class DecodeError(ValueError):
    """Raised when bytes on the wire do not form a valid frame or envelope.

    ``offset`` is the byte position (relative to the start of the buffer
    handed to the decoder) where the problem was detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class WireMessage:
    """One protocol message.

    ``msg_id`` is assigned by the sending side and must increase strictly
    for each direction of a connection. ``session_id`` is None outside a
    session context (Hello, EnqueueRequest, registration, transport errors).
    ``payload`` carries the type-specific fields as a plain dict.
    """

    type: str
    msg_id: int
    payload: dict = field(default_factory=dict)
    session_id: str | None = None

    @property
    def known(self) -> bool:
        return self.type in MESSAGE_TYPES


def encode(msg: WireMessage) -> bytes:
    """Serialize one message to a framed byte string."""
    envelope: dict = {
        "msg_id": msg.msg_id,
        "payload": msg.payload,
        "type": msg.type,
    }
    if msg.session_id is not None:
        envelope["session_id"] = msg.session_id
    body = canonical_json(envelope)
    if len(body) > MAX_FRAME_BYTES:
        raise ValueError(f"frame body of {len(body)} bytes exceeds limit")
    return str(len(body)).encode("ascii") + b"\n" + body + b"\n"


def _parse_envelope(body: bytes, offset: int) -> WireMessage:
    try:
        doc = json.loads(body)
    except (ValueError, UnicodeDecodeError):
        raise DecodeError("frame body is not valid JSON", offset) from None
    if not isinstance(doc, dict):
        raise DecodeError("envelope must be a JSON object", offset)
    tag = doc.get("type")
    if not isinstance(tag, str) or not tag:
        raise DecodeError("envelope field 'type' must be a non-empty string", offset)
    msg_id = doc.get("msg_id")
    if not isinstance(msg_id, int) or isinstance(msg_id, bool) or msg_id < 0:
        raise DecodeError("envelope field 'msg_id' must be a non-negative integer", offset)
    payload = doc.get("payload", {})
    if not isinstance(payload, dict):
        raise DecodeError("envelope field 'payload' must be an object", offset)
    session_id = doc.get("session_id")
    if session_id is not None and not isinstance(session_id, str):
        raise DecodeError("envelope field 'session_id' must be a string", offset)
    return WireMessage(type=tag, msg_id=msg_id, payload=payload, session_id=session_id)


def decode(buffer: bytes, start: int = 0) -> tuple[WireMessage, int]:
    """Decode one frame from ``buffer`` beginning at ``start``.

    Returns the message and the offset just past its trailing newline.
    Raises :class:`DecodeError` on malformed input and :class:`IncompleteFrame`
    when the buffer simply ends too early (callers that stream should catch
    the latter and wait for more bytes).
    """
    nl = buffer.find(b"\n", start, start + _MAX_LENGTH_DIGITS + 1)
    if nl < 0:
        if len(buffer) - start <= _MAX_LENGTH_DIGITS:
            raise IncompleteFrame(start)
        raise DecodeError("length prefix missing terminator", start)
    prefix = buffer[start:nl]
    if not prefix or not prefix.isdigit():
        raise DecodeError("length prefix must be decimal digits", start)
    length = int(prefix)
    if length > MAX_FRAME_BYTES:
        raise DecodeError(f"declared frame length {length} exceeds limit", start)
    body_start = nl + 1
    body_end = body_start + length
    if body_end + 1 > len(buffer):
        raise IncompleteFrame(start)
    if buffer[body_end : body_end + 1] != b"\n":
        raise DecodeError("frame body not followed by newline", body_end)
    msg = _parse_envelope(buffer[body_start:body_end], body_start)
    return msg, body_end + 1


class IncompleteFrame(Exception):
    """The buffer ends before the current frame is complete. Not an error."""

    def __init__(self, offset: int):
        super().__init__(f"incomplete frame starting at byte {offset}")
        self.offset = offset


class FrameReader:
    """Incremental decoder for a byte stream.

    Feed arbitrary chunks; collect whole messages as they complete. A
    DecodeError from the underlying stream is sticky: framing has lost
    sync, so the connection must be torn down.
    """

    def __init__(self) -> None:
        self._buf = bytearray()
        self._dead = False

    def feed(self, data: bytes) -> list[WireMessage]:
        if self._dead:
            raise DecodeError("reader already failed; close the connection", 0)
        self._buf.extend(data)
        out: list[WireMessage] = []
        pos = 0
        view = bytes(self._buf)
        while True:
            try:
                msg, pos = decode(view, pos)
            except IncompleteFrame:
                break
            except DecodeError:
                self._dead = True
                del self._buf[:pos]
                raise
            out.append(msg)
        del self._buf[:pos]
        return out

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)
