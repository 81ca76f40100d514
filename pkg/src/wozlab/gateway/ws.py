"""Minimal server-side WebSocket (RFC 6455) support.

Only what a browser needs to carry our framed protocol: handshake,
masked client frames, text/binary/ping/pong/close opcodes, and
fragmentation reassembly. Extensions and compression are not negotiated.
"""
from __future__ import annotations

import base64
import hashlib
import struct

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA

_CONTROL_OPS = (OP_CLOSE, OP_PING, OP_PONG)


class WebSocketError(Exception):
    pass


def accept_key(client_key: str) -> str:
    raw = hashlib.sha1((client_key + _GUID).encode("ascii")).digest()
    return base64.b64encode(raw).decode("ascii")


def handshake_response(client_key: str) -> bytes:
    return (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(client_key)}\r\n"
        "\r\n"
    ).encode("ascii")


def encode_frame(payload: bytes, opcode: int = OP_BINARY) -> bytes:
    """Server-to-client frame: FIN set, never masked."""
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 1 << 16:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    return head + payload


def encode_close(code: int = 1000) -> bytes:
    return encode_frame(struct.pack(">H", code), OP_CLOSE)


class FrameParser:
    """Incremental parser for client-to-server frames.

    ``feed`` returns a list of (opcode, payload) events where fragmented
    data frames come out reassembled under their original opcode.
    """

    def __init__(self, *, require_mask: bool = True, max_message: int = 16 * 1024 * 1024):
        self._buf = bytearray()
        self._fragments: list[bytes] = []
        self._fragment_op: int | None = None
        self._require_mask = require_mask
        self._max_message = max_message

    def feed(self, data: bytes) -> list[tuple[int, bytes]]:
        self._buf.extend(data)
        events: list[tuple[int, bytes]] = []
        while True:
            parsed = self._try_parse_one()
            if parsed is None:
                return events
            fin, opcode, payload = parsed
            if opcode in _CONTROL_OPS:
                if not fin:
                    raise WebSocketError("fragmented control frame")
                events.append((opcode, payload))
                continue
            if opcode == OP_CONT:
                if self._fragment_op is None:
                    raise WebSocketError("continuation without a started message")
                self._fragments.append(payload)
            else:
                if self._fragment_op is not None:
                    raise WebSocketError("new data frame while fragmented message open")
                self._fragment_op = opcode
                self._fragments = [payload]
            if sum(map(len, self._fragments)) > self._max_message:
                raise WebSocketError("message exceeds size limit")
            if fin:
                events.append((self._fragment_op, b"".join(self._fragments)))
                self._fragment_op = None
                self._fragments = []

    def _try_parse_one(self) -> tuple[bool, int, bytes] | None:
        buf = self._buf
        if len(buf) < 2:
            return None
        b0, b1 = buf[0], buf[1]
        if b0 & 0x70:
            raise WebSocketError("RSV bits set without negotiated extension")
        fin = bool(b0 & 0x80)
        opcode = b0 & 0x0F
        masked = bool(b1 & 0x80)
        if self._require_mask and not masked:
            raise WebSocketError("client frames must be masked")
        length = b1 & 0x7F
        pos = 2
        if length == 126:
            if len(buf) < pos + 2:
                return None
            (length,) = struct.unpack_from(">H", buf, pos)
            pos += 2
        elif length == 127:
            if len(buf) < pos + 8:
                return None
            (length,) = struct.unpack_from(">Q", buf, pos)
            pos += 8
        if length > self._max_message:
            raise WebSocketError("frame exceeds size limit")
        mask = b""
        if masked:
            if len(buf) < pos + 4:
                return None
            mask = bytes(buf[pos : pos + 4])
            pos += 4
        if len(buf) < pos + length:
            return None
        payload = bytes(buf[pos : pos + length])
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        del buf[: pos + length]
        return fin, opcode, payload


def mask_client_frame(payload: bytes, opcode: int = OP_BINARY, mask: bytes = b"\x12\x34\x56\x78") -> bytes:
    """Client-to-server frame with a fixed mask; used by tests and the
    in-repo harness clients (browsers do their own masking)."""
    if len(mask) != 4:
        raise ValueError("mask must be 4 bytes")
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([0x80 | n])
    elif n < 1 << 16:
        head += bytes([0x80 | 126]) + struct.pack(">H", n)
    else:
        head += bytes([0x80 | 127]) + struct.pack(">Q", n)
    body = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return head + mask + body
