"""Session wire protocol: tagged binary messages.

Every message body is one type byte followed by a payload: JSON (UTF-8) for
control/telemetry messages, raw bytes for video frames. Over plain TCP each
body is preceded by a big-endian u32 length; over WebSocket the body rides
in one binary frame (the WS layer already delimits lengths).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

PROTOCOL_VERSION = 1
MAX_MESSAGE_BYTES = 16 * 1024 * 1024

T_HELLO = 0x01
T_FRAME = 0x02
T_CONFIG_PATCH = 0x03
T_NOTE_ON = 0x10
T_NOTE_OFF = 0x11
T_ENV = 0x12
T_STATS = 0x13
T_ERROR = 0x1F


class ProtocolError(Exception):
    pass


@dataclass(frozen=True)
class Hello:
    protocol_version: int
    fps: float
    width: int
    height: int


@dataclass(frozen=True)
class FramePayload:
    frame_index: int
    pixels: bytes  # grayscale, row-major, width*height long


@dataclass(frozen=True)
class ConfigPatch:
    fields: dict


@dataclass(frozen=True)
class NoteOn:
    note_index: int
    velocity: int
    column: int
    row: int
    freq_hz: float
    frame_index: int


@dataclass(frozen=True)
class NoteOff:
    note_index: int
    frame_index: int


@dataclass(frozen=True)
class Env:
    note_index: int
    value: float
    frame_index: int


@dataclass(frozen=True)
class Stats:
    clip_count: int
    rms: float
    frame_lag: int
    dropped_events: int = 0


@dataclass(frozen=True)
class ErrorMsg:
    message: str


def _json_body(tag: int, obj: dict) -> bytes:
    return bytes([tag]) + json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def encode_message(msg) -> bytes:
    """Message body: type byte + payload (no transport length prefix)."""
    if isinstance(msg, Hello):
        return _json_body(T_HELLO, {
            "protocol_version": msg.protocol_version, "fps": msg.fps,
            "width": msg.width, "height": msg.height,
        })
    if isinstance(msg, FramePayload):
        return bytes([T_FRAME]) + struct.pack(">I", msg.frame_index) + msg.pixels
    if isinstance(msg, ConfigPatch):
        return _json_body(T_CONFIG_PATCH, msg.fields)
    if isinstance(msg, NoteOn):
        return _json_body(T_NOTE_ON, {
            "note_index": msg.note_index, "velocity": msg.velocity,
            "column": msg.column, "row": msg.row, "freq_hz": msg.freq_hz,
            "frame_index": msg.frame_index,
        })
    if isinstance(msg, NoteOff):
        return _json_body(T_NOTE_OFF, {
            "note_index": msg.note_index, "frame_index": msg.frame_index,
        })
    if isinstance(msg, Env):
        return _json_body(T_ENV, {
            "note_index": msg.note_index, "value": msg.value,
            "frame_index": msg.frame_index,
        })
    if isinstance(msg, Stats):
        return _json_body(T_STATS, {
            "clip_count": msg.clip_count, "rms": msg.rms,
            "frame_lag": msg.frame_lag, "dropped_events": msg.dropped_events,
        })
    if isinstance(msg, ErrorMsg):
        return _json_body(T_ERROR, {"message": msg.message})
    raise ProtocolError(f"cannot encode {type(msg).__name__}")


def _json_payload(body: bytes, tag: int) -> dict:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"bad JSON payload for tag 0x{tag:02x}: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("JSON payload must be an object")
    return obj


def _require(obj: dict, fields: dict, tag_name: str) -> list:
    out = []
    for name, kinds in fields.items():
        if name not in obj:
            raise ProtocolError(f"{tag_name} missing field {name!r}")
        val = obj[name]
        if not isinstance(val, kinds) or isinstance(val, bool):
            raise ProtocolError(f"{tag_name} field {name!r} has wrong type")
        out.append(val)
    return out


def decode_message(body: bytes):
    """Parse a message body; raises ProtocolError on anything malformed."""
    if len(body) < 1:
        raise ProtocolError("empty message")
    tag, payload = body[0], body[1:]
    if tag == T_HELLO:
        ver, fps, w, h = _require(_json_payload(payload, tag), {
            "protocol_version": int, "fps": (int, float),
            "width": int, "height": int,
        }, "hello")
        return Hello(ver, float(fps), w, h)
    if tag == T_FRAME:
        if len(payload) < 4:
            raise ProtocolError("frame message truncated")
        (frame_index,) = struct.unpack_from(">I", payload, 0)
        return FramePayload(frame_index, payload[4:])
    if tag == T_CONFIG_PATCH:
        return ConfigPatch(_json_payload(payload, tag))
    if tag == T_NOTE_ON:
        ni, vel, col, row, freq, fi = _require(_json_payload(payload, tag), {
            "note_index": int, "velocity": int, "column": int, "row": int,
            "freq_hz": (int, float), "frame_index": int,
        }, "note_on")
        return NoteOn(ni, vel, col, row, float(freq), fi)
    if tag == T_NOTE_OFF:
        ni, fi = _require(_json_payload(payload, tag), {
            "note_index": int, "frame_index": int,
        }, "note_off")
        return NoteOff(ni, fi)
    if tag == T_ENV:
        ni, value, fi = _require(_json_payload(payload, tag), {
            "note_index": int, "value": (int, float), "frame_index": int,
        }, "env")
        return Env(ni, float(value), fi)
    if tag == T_STATS:
        obj = _json_payload(payload, tag)
        clip, r, lag = _require(obj, {
            "clip_count": int, "rms": (int, float), "frame_lag": int,
        }, "stats")
        dropped = obj.get("dropped_events", 0)
        if not isinstance(dropped, int) or isinstance(dropped, bool):
            raise ProtocolError("stats field 'dropped_events' has wrong type")
        return Stats(clip, float(r), lag, dropped)
    if tag == T_ERROR:
        (message,) = _require(_json_payload(payload, tag), {"message": str}, "error")
        return ErrorMsg(message)
    raise ProtocolError(f"unknown message tag 0x{tag:02x}")


# --- raw TCP framing --------------------------------------------------------

def frame_for_tcp(body: bytes) -> bytes:
    if len(body) > MAX_MESSAGE_BYTES:
        raise ProtocolError("message too large")
    return struct.pack(">I", len(body)) + body


def read_exact(sock, n: int) -> bytes | None:
    """Read exactly n bytes from a socket; None on clean EOF at a boundary."""
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            if remaining == n:
                return None
            raise ProtocolError("connection closed mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_tcp_message(sock) -> bytes | None:
    header = read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length == 0 or length > MAX_MESSAGE_BYTES:
        raise ProtocolError(f"bad message length {length}")
    return read_exact(sock, length)
