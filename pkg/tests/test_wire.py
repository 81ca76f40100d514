"""Frame codec: round trips, streaming reassembly, malformed-input diagnostics."""
from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wozlab.gateway.wire import (
    MAX_FRAME_BYTES,
    MESSAGE_TYPES,
    DecodeError,
    FrameReader,
    IncompleteFrame,
    WireMessage,
    decode,
    encode,
)


def test_sixteen_message_types():
    assert len(MESSAGE_TYPES) == 16


def test_round_trip_minimal():
    msg = WireMessage(type="Ping", msg_id=0)
    out, end = decode(encode(msg))
    assert out == msg
    assert end == len(encode(msg))
    assert out.session_id is None


def test_round_trip_full_envelope():
    msg = WireMessage(
        type="Chat",
        msg_id=41,
        payload={"text": "hello there", "scene_version": 7},
        session_id="s3",
    )
    out, _ = decode(encode(msg))
    assert out == msg


def test_frame_layout_is_length_newline_body_newline():
    msg = WireMessage(type="Ping", msg_id=5)
    raw = encode(msg)
    length_str, body_and_tail = raw.split(b"\n", 1)
    assert body_and_tail.endswith(b"\n")
    body = body_and_tail[:-1]
    assert int(length_str) == len(body)
    doc = json.loads(body)
    assert doc == {"msg_id": 5, "payload": {}, "type": "Ping"}


def test_envelope_bytes_are_canonical():
    # Same message must always frame to the same bytes: key order is fixed.
    a = WireMessage(type="Pong", msg_id=9, payload={"b": 1, "a": 2}, session_id="s1")
    b = WireMessage(type="Pong", msg_id=9, payload={"a": 2, "b": 1}, session_id="s1")
    assert encode(a) == encode(b)


def test_unknown_type_decodes_and_is_flagged():
    msg = WireMessage(type="FutureThing", msg_id=1, payload={"x": 1})
    out, _ = decode(encode(msg))
    assert out == msg
    assert not out.known
    assert WireMessage(type="Delta", msg_id=1).known


def test_decode_multiple_frames_back_to_back():
    msgs = [WireMessage(type="Ping", msg_id=i) for i in range(4)]
    blob = b"".join(encode(m) for m in msgs)
    pos, seen = 0, []
    while pos < len(blob):
        m, pos = decode(blob, pos)
        seen.append(m)
    assert seen == msgs


@pytest.mark.parametrize(
    "raw, want",
    [
        (b"abc\n{}\n", "length prefix must be decimal digits"),
        (b"-3\n{}\n", "length prefix must be decimal digits"),
        (b"\n{}\n", "length prefix must be decimal digits"),
        (b"99999999999\nx", "length prefix missing terminator"),
        (b"9999999\n", "exceeds limit"),
        (b"2\n{}X", "not followed by newline"),
        (b"7\nnotjson\n", "not valid JSON"),
        (b"2\n[]\n", "must be a JSON object"),
    ],
)
def test_malformed_frames_raise_decode_error(raw, want):
    with pytest.raises(DecodeError) as err:
        decode(raw)
    assert want in str(err.value)
    assert "at byte" in str(err.value)


@pytest.mark.parametrize(
    "doc, want",
    [
        ({"msg_id": 1, "payload": {}}, "'type'"),
        ({"type": "", "msg_id": 1, "payload": {}}, "'type'"),
        ({"type": "Ping", "payload": {}}, "'msg_id'"),
        ({"type": "Ping", "msg_id": -1, "payload": {}}, "'msg_id'"),
        ({"type": "Ping", "msg_id": True, "payload": {}}, "'msg_id'"),
        ({"type": "Ping", "msg_id": 1, "payload": []}, "'payload'"),
        ({"type": "Ping", "msg_id": 1, "payload": {}, "session_id": 7}, "'session_id'"),
    ],
)
def test_bad_envelope_fields(doc, want):
    body = json.dumps(doc).encode()
    raw = str(len(body)).encode() + b"\n" + body + b"\n"
    with pytest.raises(DecodeError) as err:
        decode(raw)
    assert want in str(err.value)


def test_missing_payload_defaults_to_empty():
    body = b'{"type":"Ping","msg_id":3}'
    raw = str(len(body)).encode() + b"\n" + body + b"\n"
    msg, _ = decode(raw)
    assert msg.payload == {}


def test_truncated_buffer_is_incomplete_not_error():
    raw = encode(WireMessage(type="Ping", msg_id=1))
    for cut in range(len(raw)):
        with pytest.raises(IncompleteFrame):
            decode(raw[:cut])


def test_error_offset_points_into_second_frame():
    good = encode(WireMessage(type="Ping", msg_id=1))
    bad = good + b"zz\n{}\n"
    msg, pos = decode(bad)
    assert msg.msg_id == 1
    with pytest.raises(DecodeError) as err:
        decode(bad, pos)
    assert err.value.offset == len(good)


def test_oversized_body_refused_on_encode():
    big = WireMessage(type="Chat", msg_id=1, payload={"text": "x" * (MAX_FRAME_BYTES + 1)})
    with pytest.raises(ValueError):
        encode(big)


class TestFrameReader:
    def test_byte_at_a_time_reassembly(self):
        msgs = [
            WireMessage(type="Hello", msg_id=1, payload={"role": "user"}),
            WireMessage(type="Chat", msg_id=2, payload={"text": "hi"}, session_id="s0"),
        ]
        blob = b"".join(encode(m) for m in msgs)
        reader = FrameReader()
        seen = []
        for i in range(len(blob)):
            seen.extend(reader.feed(blob[i : i + 1]))
        assert seen == msgs
        assert reader.pending_bytes == 0

    def test_split_across_chunks_preserves_order(self):
        msgs = [WireMessage(type="Ping", msg_id=i) for i in range(10)]
        blob = b"".join(encode(m) for m in msgs)
        reader = FrameReader()
        seen = reader.feed(blob[:17])
        seen += reader.feed(blob[17:])
        assert seen == msgs

    def test_error_is_sticky(self):
        reader = FrameReader()
        with pytest.raises(DecodeError):
            reader.feed(b"junk\n")
        with pytest.raises(DecodeError):
            reader.feed(encode(WireMessage(type="Ping", msg_id=1)))

    def test_good_frames_before_bad_one_still_delivered_then_error(self):
        reader = FrameReader()
        good = encode(WireMessage(type="Ping", msg_id=1))
        # One clean feed first, then a corrupt frame.
        assert [m.msg_id for m in reader.feed(good)] == [1]
        with pytest.raises(DecodeError):
            reader.feed(b"?\n")


_payloads = st.dictionaries(
    st.text(min_size=1, max_size=8),
    st.one_of(
        st.integers(min_value=-(10**9), max_value=10**9),
        st.text(max_size=20),
        st.booleans(),
        st.none(),
        st.lists(st.integers(min_value=0, max_value=99), max_size=4),
    ),
    max_size=5,
)

_messages = st.builds(
    WireMessage,
    type=st.sampled_from(sorted(MESSAGE_TYPES)),
    msg_id=st.integers(min_value=0, max_value=2**53),
    payload=_payloads,
    session_id=st.one_of(st.none(), st.text(min_size=1, max_size=10)),
)


@settings(max_examples=200)
@given(st.lists(_messages, max_size=6), st.randoms())
def test_property_stream_round_trip(msgs, rng):
    blob = b"".join(encode(m) for m in msgs)
    reader = FrameReader()
    seen = []
    pos = 0
    while pos < len(blob):
        step = rng.randint(1, max(1, len(blob) - pos))
        seen.extend(reader.feed(blob[pos : pos + step]))
        pos += step
    assert seen == msgs


@settings(max_examples=200)
@given(st.binary(max_size=64))
def test_property_arbitrary_bytes_never_crash_decoder(data):
    reader = FrameReader()
    try:
        reader.feed(data)
    except DecodeError:
        pass  # rejecting junk is the contract; raising anything else is not
