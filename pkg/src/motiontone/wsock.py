"""Minimal server-side WebSocket (RFC 6455) framing for browser clients.

Only what the session service needs: the upgrade handshake, masked client
frames in, unmasked binary frames out, ping/pong, close. Messages map 1:1
onto protocol bodies; WS framing supplies the length delimiting that the
raw TCP transport gets from its u32 prefix.
"""

from __future__ import annotations

import base64
import hashlib
import struct

from .protocol import MAX_MESSAGE_BYTES, ProtocolError, read_exact

_MAGIC = b"258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1(client_key.encode("ascii") + _MAGIC).digest()
    return base64.b64encode(digest).decode("ascii")


def perform_handshake(sock, first_chunk: bytes = b"") -> None:
    """Read the HTTP upgrade request and answer 101; raises on a bad request."""
    data = bytearray(first_chunk)
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise ProtocolError("connection closed during WebSocket handshake")
        data.extend(chunk)
        if len(data) > 65536:
            raise ProtocolError("oversized WebSocket handshake")
    head = bytes(data).split(b"\r\n\r\n", 1)[0].decode("latin-1")
    lines = head.split("\r\n")
    if not lines[0].startswith("GET "):
        raise ProtocolError("not a WebSocket upgrade request")
    headers = {}
    for line in lines[1:]:
        if ":" in line:
            k, v = line.split(":", 1)
            headers[k.strip().lower()] = v.strip()
    key = headers.get("sec-websocket-key")
    if not key or "websocket" not in headers.get("upgrade", "").lower():
        raise ProtocolError("missing WebSocket upgrade headers")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n\r\n"
    )
    sock.sendall(response.encode("ascii"))


def encode_frame(payload: bytes, opcode: int = OP_BINARY) -> bytes:
    """One unmasked server frame (FIN set)."""
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 1 << 16:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    return head + payload


def _read_frame(sock):
    header = read_exact(sock, 2)
    if header is None:
        return None, None
    fin = bool(header[0] & 0x80)
    opcode = header[0] & 0x0F
    masked = bool(header[1] & 0x80)
    n = header[1] & 0x7F
    if n == 126:
        (n,) = struct.unpack(">H", read_exact(sock, 2))
    elif n == 127:
        (n,) = struct.unpack(">Q", read_exact(sock, 8))
    if n > MAX_MESSAGE_BYTES:
        raise ProtocolError("oversized WebSocket frame")
    if not masked:
        raise ProtocolError("client frames must be masked")
    mask = read_exact(sock, 4)
    payload = read_exact(sock, n) if n else b""
    if payload is None or mask is None:
        raise ProtocolError("connection closed mid-frame")
    unmasked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload)) if n else b""
    return (fin, opcode), unmasked


class WebSocketTransport:
    """Message-oriented view of an upgraded socket (server side)."""

    def __init__(self, sock):
        self._sock = sock

    def send(self, body: bytes) -> None:
        self._sock.sendall(encode_frame(body))

    def recv(self) -> bytes | None:
        """Next complete binary/text message; None once the peer closes."""
        buffer = b""
        while True:
            head, payload = _read_frame(self._sock)
            if head is None:
                return None
            fin, opcode = head
            if opcode == OP_CLOSE:
                try:
                    self._sock.sendall(encode_frame(payload[:2], OP_CLOSE))
                except OSError:
                    pass
                return None
            if opcode == OP_PING:
                self._sock.sendall(encode_frame(payload, OP_PONG))
                continue
            if opcode == OP_PONG:
                continue
            if opcode in (OP_BINARY, OP_TEXT, OP_CONT):
                buffer += payload
                if fin:
                    return buffer
                continue
            raise ProtocolError(f"unsupported WebSocket opcode {opcode}")


class RawTcpTransport:
    """Length-prefixed message framing over a plain socket."""

    def __init__(self, sock, first_chunk: bytes = b""):
        self._sock = sock
        self._pending = first_chunk

    def send(self, body: bytes) -> None:
        from .protocol import frame_for_tcp

        self._sock.sendall(frame_for_tcp(body))

    def _read(self, n: int) -> bytes | None:
        while len(self._pending) < n:
            chunk = self._sock.recv(65536)
            if not chunk:
                return None if not self._pending else self._fail()
            self._pending += chunk
        out, self._pending = self._pending[:n], self._pending[n:]
        return out

    def _fail(self):
        raise ProtocolError("connection closed mid-message")

    def recv(self) -> bytes | None:
        header = self._read(4)
        if header is None:
            return None
        (length,) = struct.unpack(">I", header)
        if length == 0 or length > MAX_MESSAGE_BYTES:
            raise ProtocolError(f"bad message length {length}")
        body = self._read(length)
        if body is None:
            self._fail()
        return body


def open_transport(sock):
    """Sniff the first bytes: an HTTP GET upgrades to WebSocket, anything
    else is treated as raw length-prefixed TCP."""
    first = sock.recv(4)
    if not first:
        return None
    if first == b"GET ":
        perform_handshake(sock, first)
        return WebSocketTransport(sock)
    return RawTcpTransport(sock, first)
