import base64
import hashlib
import os
import socket
import struct
import time

import numpy as np
import pytest

from motiontone.engine import EngineConfig
from motiontone.protocol import (PROTOCOL_VERSION, ConfigPatch, Env, ErrorMsg,
                                 FramePayload, Hello, NoteOn, NoteOff, Stats,
                                 decode_message, encode_message, frame_for_tcp)
from motiontone.service import NullAudioSink, SessionServer, _OutQueue
from motiontone.wsock import accept_key, encode_frame


@pytest.fixture
def server():
    srv = SessionServer("127.0.0.1", 0, EngineConfig(), audio="none")
    srv.start()
    yield srv
    srv.stop()


class RawClient:
    def __init__(self, server):
        self.sock = socket.create_connection((server.host, server.port), timeout=5)

    def send(self, msg):
        self.sock.sendall(frame_for_tcp(encode_message(msg)))

    def recv(self, timeout=2.0):
        self.sock.settimeout(timeout)
        try:
            header = self._exact(4)
        except (socket.timeout, ConnectionResetError):
            return None
        if header is None:
            return None
        (length,) = struct.unpack(">I", header)
        return decode_message(self._exact(length))

    def _exact(self, n):
        buf = b""
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                return None if not buf else buf
            buf += chunk
        return buf

    def drain(self, duration=1.0):
        messages = []
        deadline = time.monotonic() + duration
        while time.monotonic() < deadline:
            msg = self.recv(timeout=max(0.05, deadline - time.monotonic()))
            if msg is None:
                break
            messages.append(msg)
        return messages

    def close(self):
        self.sock.close()


def gray_frames(n=4, column=25, width=320, height=240, seed=11):
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 256, size=(height, width), dtype=np.uint8)
    xs = np.arange(width)[(np.arange(width) * 51) // width == column]
    frames = []
    for i in range(n):
        gray = base.copy()
        if i >= 1:
            gray[100:120, xs.min():xs.max() + 1] = 255 if i % 2 else 0
        frames.append(gray.tobytes())
    return frames


def good_hello(width=320, height=240):
    return Hello(protocol_version=PROTOCOL_VERSION, fps=30.0, width=width, height=height)


class TestSessionBasics:
    def test_version_mismatch_rejected(self, server):
        client = RawClient(server)
        client.send(Hello(protocol_version=99, fps=30, width=320, height=240))
        msg = client.recv()
        assert isinstance(msg, ErrorMsg)
        assert "version" in msg.message
        assert client.recv(timeout=1.0) is None  # connection closed
        client.close()

    def test_first_message_must_be_hello(self, server):
        client = RawClient(server)
        client.send(NoteOff(1, 0))
        msg = client.recv()
        assert isinstance(msg, ErrorMsg)
        client.close()

    def test_undersized_frames_rejected(self, server):
        client = RawClient(server)
        client.send(Hello(protocol_version=PROTOCOL_VERSION, fps=30, width=40, height=40))
        msg = client.recv()
        assert isinstance(msg, ErrorMsg)
        assert "51x127" in msg.message
        client.close()

    def test_payload_length_checked(self, server):
        client = RawClient(server)
        client.send(good_hello())
        client.send(FramePayload(0, b"\x00" * 100))  # != 320*240
        messages = client.drain(1.0)
        assert any(isinstance(m, ErrorMsg) and "width*height" in m.message
                   for m in messages)
        client.close()

    def test_frame_index_must_increase(self, server):
        client = RawClient(server)
        client.send(good_hello())
        frame = gray_frames(1)[0]
        client.send(FramePayload(5, frame))
        time.sleep(0.1)
        client.send(FramePayload(5, frame))
        messages = client.drain(1.0)
        assert any(isinstance(m, ErrorMsg) and "not increasing" in m.message
                   for m in messages)
        client.close()


class TestSessionFlow:
    def test_motion_produces_one_note_on(self, server):
        client = RawClient(server)
        client.send(good_hello())
        for i, payload in enumerate(gray_frames(4)):
            client.send(FramePayload(i, payload))
            time.sleep(0.08)  # let the engine consume each frame
        messages = client.drain(1.0)
        client.close()
        ons = [m for m in messages if isinstance(m, NoteOn)]
        assert len(ons) == 1
        assert ons[0].note_index == 25
        assert 1 <= ons[0].velocity <= 127
        assert any(isinstance(m, Env) and m.note_index == 25 for m in messages)
        stats = [m for m in messages if isinstance(m, Stats)]
        assert stats and all(s.frame_lag >= 0 for s in stats)

    def test_static_frames_produce_stats_only(self, server):
        client = RawClient(server)
        client.send(good_hello())
        payload = gray_frames(1)[0]
        for i in range(3):
            client.send(FramePayload(i, payload))
            time.sleep(0.08)
        messages = client.drain(0.7)
        client.close()
        assert not any(isinstance(m, (NoteOn, NoteOff)) for m in messages)
        assert any(isinstance(m, Stats) and m.rms == 0.0 for m in messages)

    def test_config_patch_applies(self, server):
        client = RawClient(server)
        client.send(good_hello())
        client.send(ConfigPatch({"release_frames": 1}))
        frames = gray_frames(2)
        client.send(FramePayload(0, frames[0]))
        time.sleep(0.08)
        client.send(FramePayload(1, frames[1]))
        time.sleep(0.08)
        # two quiet frames: with release_frames=1 the note must close fast
        for i in (2, 3):
            client.send(FramePayload(i, frames[1]))
            time.sleep(0.08)
        messages = client.drain(0.8)
        client.close()
        assert any(isinstance(m, NoteOff) for m in messages)

    def test_bad_config_patch_reports_error(self, server):
        client = RawClient(server)
        client.send(good_hello())
        client.send(ConfigPatch({"nonsense": 1}))
        client.send(FramePayload(0, gray_frames(1)[0]))
        messages = client.drain(1.0)
        client.close()
        assert any(isinstance(m, ErrorMsg) and "nonsense" in m.message
                   for m in messages)

    def test_sessions_are_serial(self, server):
        first = RawClient(server)
        first.send(good_hello())
        second = RawClient(server)  # queued until the first disconnects
        first.close()
        time.sleep(0.2)
        second.send(good_hello())
        second.send(FramePayload(0, gray_frames(1)[0]))
        messages = second.drain(0.8)
        assert any(isinstance(m, Stats) for m in messages)
        second.close()


class WsClient:
    """Hand-rolled RFC 6455 client, independent of the server-side code."""

    def __init__(self, server):
        self.sock = socket.create_connection((server.host, server.port), timeout=5)
        key = base64.b64encode(os.urandom(16)).decode()
        request = (
            f"GET /session HTTP/1.1\r\nHost: {server.host}:{server.port}\r\n"
            "Upgrade: websocket\r\nConnection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\nSec-WebSocket-Version: 13\r\n\r\n"
        )
        self.sock.sendall(request.encode())
        response = b""
        while b"\r\n\r\n" not in response:
            response += self.sock.recv(4096)
        assert b"101" in response.split(b"\r\n")[0]
        expect = base64.b64encode(
            hashlib.sha1((key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11").encode()).digest()
        )
        assert expect in response

    def send(self, msg):
        payload = encode_message(msg)
        mask = os.urandom(4)
        head = bytes([0x82])  # FIN + binary
        n = len(payload)
        if n < 126:
            head += bytes([0x80 | n])
        elif n < 1 << 16:
            head += bytes([0x80 | 126]) + struct.pack(">H", n)
        else:
            head += bytes([0x80 | 127]) + struct.pack(">Q", n)
        masked = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        self.sock.sendall(head + mask + masked)

    def recv(self, timeout=2.0):
        self.sock.settimeout(timeout)
        try:
            head = self._exact(2)
        except socket.timeout:
            return None
        if head is None:
            return None
        n = head[1] & 0x7F
        if n == 126:
            (n,) = struct.unpack(">H", self._exact(2))
        elif n == 127:
            (n,) = struct.unpack(">Q", self._exact(8))
        payload = self._exact(n) if n else b""
        if head[0] & 0x0F == 0x8:
            return None
        return decode_message(payload)

    def _exact(self, n):
        buf = b""
        while len(buf) < n:
            chunk = self.sock.recv(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf

    def close(self):
        self.sock.close()


class TestWebSocketTransport:
    def test_rfc6455_accept_key_vector(self):
        assert accept_key("dGhlIHNhbXBsZSBub25jZQ==") == "s3pPLMBiTxaQ9kYGzzhZRbK+xOo="

    def test_frame_length_encodings(self):
        assert encode_frame(b"x" * 5)[1] == 5
        long_frame = encode_frame(b"x" * 300)
        assert long_frame[1] == 126
        assert struct.unpack(">H", long_frame[2:4])[0] == 300
        huge = encode_frame(b"x" * 70000)
        assert huge[1] == 127
        assert struct.unpack(">Q", huge[2:10])[0] == 70000

    def test_full_session_over_websocket(self, server):
        client = WsClient(server)
        client.send(good_hello())
        for i, payload in enumerate(gray_frames(3)):
            client.send(FramePayload(i, payload))
            time.sleep(0.08)
        messages = []
        deadline = time.monotonic() + 1.5
        while time.monotonic() < deadline:
            msg = client.recv(timeout=0.3)
            if msg is None:
                break
            messages.append(msg)
        client.close()
        assert any(isinstance(m, NoteOn) and m.note_index == 25 for m in messages)
        assert any(isinstance(m, Stats) for m in messages)


class TestOutQueue:
    def test_drops_oldest(self):
        q = _OutQueue(limit=3)
        for i in range(5):
            q.push(i)
        assert q.dropped == 2
        assert [q.pop(0.01) for _ in range(3)] == [2, 3, 4]

    def test_null_sink_noop(self):
        sink = NullAudioSink()
        sink.write(np.zeros(16))
        sink.close()
