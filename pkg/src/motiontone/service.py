"""Live session service: frames in over the wire, note/env/stats out.

One session at a time. The network reader pushes decoded frames into a
latest-wins mailbox; the engine thread pulls, renders, plays audio locally,
and emits telemetry through a bounded queue drained by a sender thread.
Events are dropped oldest-first if the client cannot keep up, and the drop
count is reported in stats.
"""

from __future__ import annotations

import logging
import socket
import threading
from collections import deque

import numpy as np

from . import protocol
from .engine import Engine, EngineConfig
from .notes import ConfigError
from .protocol import (PROTOCOL_VERSION, ErrorMsg, Hello, ProtocolError,
                       decode_message, encode_message)
from .video_io import MIN_HEIGHT, MIN_WIDTH, FrameMailbox, LiveStream, VideoFrame, gray_to_rgb
from .wsock import open_transport

log = logging.getLogger(__name__)

OUT_QUEUE_LIMIT = 4096


class AudioUnavailableError(RuntimeError):
    pass


class NullAudioSink:
    """Discards audio; used headless and in tests."""

    def write(self, samples) -> None:
        pass

    def close(self) -> None:
        pass


class SoundDeviceSink:
    def __init__(self, sample_rate: float):
        try:
            import sounddevice
        except ImportError as exc:
            raise AudioUnavailableError(
                "audio playback needs the 'sounddevice' package (pip install motiontone[audio])"
            ) from exc
        try:
            self._stream = sounddevice.OutputStream(
                samplerate=sample_rate, channels=1, dtype="float32"
            )
            self._stream.start()
        except Exception as exc:
            raise AudioUnavailableError(f"cannot open audio output: {exc}") from exc

    def write(self, samples) -> None:
        self._stream.write(np.asarray(samples, dtype=np.float32))

    def close(self) -> None:
        self._stream.stop()
        self._stream.close()


def open_audio_sink(kind: str, sample_rate: float):
    if kind == "none":
        return NullAudioSink()
    return SoundDeviceSink(sample_rate)


class _OutQueue:
    """Bounded FIFO dropping oldest entries on overflow."""

    def __init__(self, limit: int = OUT_QUEUE_LIMIT):
        self._items = deque()
        self._limit = limit
        self._cond = threading.Condition()
        self._closed = False
        self.dropped = 0

    def push(self, item) -> None:
        with self._cond:
            if len(self._items) >= self._limit:
                self._items.popleft()
                self.dropped += 1
            self._items.append(item)
            self._cond.notify()

    def pop(self, timeout: float = 0.2):
        with self._cond:
            if not self._items and not self._closed:
                self._cond.wait(timeout)
            if self._items:
                return self._items.popleft()
            return None

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        with self._cond:
            return self._closed and not self._items


class SessionServer:
    """Accepts one client session at a time on a TCP port.

    Clients may speak either raw length-prefixed TCP or WebSocket; the
    transport is sniffed from the first bytes.
    """

    def __init__(self, host: str, port: int, config: EngineConfig, audio: str = "default"):
        self.config = config
        self.audio = audio
        # Fail fast if the host has no usable output device.
        open_audio_sink(audio, config.sample_rate).close()
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)
        self.host, self.port = self._listener.getsockname()[:2]
        self._stop = threading.Event()
        self._thread = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self._listener.close()

    def serve_forever(self) -> None:
        while not self._stop.is_set():
            try:
                sock, addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            log.info("session from %s", addr)
            try:
                self._run_session(sock)
            except Exception:
                log.exception("session failed")
            finally:
                try:
                    sock.close()
                except OSError:
                    pass

    # --- one session -------------------------------------------------------

    def _run_session(self, sock) -> None:
        sock.settimeout(30.0)
        transport = open_transport(sock)
        if transport is None:
            return
        try:
            hello = self._expect_hello(transport)
        except ProtocolError as exc:
            self._send_error(transport, str(exc))
            return
        if hello is None:
            return

        engine = Engine(self._session_config(hello))
        sink = open_audio_sink(self.audio, engine.config.sample_rate)
        mailbox = FrameMailbox()
        out = _OutQueue()
        patches = deque()
        state = {"received": 0}

        engine_thread = threading.Thread(
            target=self._engine_loop,
            args=(engine, mailbox, out, sink, patches, state), daemon=True,
        )
        sender_thread = threading.Thread(
            target=self._sender_loop, args=(transport, out), daemon=True,
        )
        engine_thread.start()
        sender_thread.start()
        try:
            self._reader_loop(transport, hello, mailbox, patches, state)
        except ProtocolError as exc:
            self._send_error(transport, str(exc))
        finally:
            mailbox.close()
            engine_thread.join(timeout=5)
            out.close()
            sender_thread.join(timeout=5)
            sink.close()

    def _session_config(self, hello: Hello) -> EngineConfig:
        from dataclasses import replace

        return replace(self.config, fps=hello.fps)

    def _expect_hello(self, transport) -> Hello | None:
        body = transport.recv()
        if body is None:
            return None
        msg = decode_message(body)
        if not isinstance(msg, Hello):
            raise ProtocolError("first message must be hello")
        if msg.protocol_version != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version {msg.protocol_version} not supported "
                f"(server speaks {PROTOCOL_VERSION})"
            )
        if msg.width < MIN_WIDTH or msg.height < MIN_HEIGHT:
            raise ProtocolError(
                f"frame size {msg.width}x{msg.height} below the "
                f"{MIN_WIDTH}x{MIN_HEIGHT} control-grid floor"
            )
        if msg.fps <= 0:
            raise ProtocolError("fps must be > 0")
        return msg

    def _send_error(self, transport, message: str) -> None:
        try:
            transport.send(encode_message(ErrorMsg(message)))
        except OSError:
            pass

    def _reader_loop(self, transport, hello, mailbox, patches, state) -> None:
        expected_len = hello.width * hello.height
        last_index = -1
        while not self._stop.is_set():
            body = transport.recv()
            if body is None:
                return
            msg = decode_message(body)
            if isinstance(msg, protocol.FramePayload):
                if len(msg.pixels) != expected_len:
                    raise ProtocolError(
                        f"frame payload {len(msg.pixels)} bytes != "
                        f"width*height {expected_len}"
                    )
                if msg.frame_index <= last_index:
                    raise ProtocolError(
                        f"frame index {msg.frame_index} not increasing"
                    )
                last_index = msg.frame_index
                gray = np.frombuffer(msg.pixels, dtype=np.uint8).reshape(
                    hello.height, hello.width
                )
                mailbox.put(VideoFrame(
                    rgb=gray_to_rgb(gray), frame_index=msg.frame_index,
                    timestamp=msg.frame_index / hello.fps,
                ))
                state["received"] += 1
            elif isinstance(msg, protocol.ConfigPatch):
                patches.append(msg.fields)
            elif isinstance(msg, Hello):
                raise ProtocolError("duplicate hello")
            else:
                raise ProtocolError(f"unexpected client message {type(msg).__name__}")

    def _engine_loop(self, engine, mailbox, out, sink, patches, state) -> None:
        stream = LiveStream(mailbox, engine.config.fps)
        for frame in stream:
            while patches:
                try:
                    engine.apply_patch(patches.popleft())
                except ConfigError as exc:
                    out.push(ErrorMsg(f"config patch rejected: {exc}"))
            try:
                audio, events = engine.process_frame(frame)
            except ConfigError as exc:
                out.push(ErrorMsg(str(exc)))
                continue
            sink.write(audio)
            for ev in events:
                if ev.kind == "note_on":
                    out.push(protocol.NoteOn(
                        note_index=ev.note_index, velocity=ev.velocity,
                        column=ev.column, row=ev.row, freq_hz=ev.freq_hz,
                        frame_index=ev.frame_index,
                    ))
                else:
                    out.push(protocol.NoteOff(
                        note_index=ev.note_index, frame_index=ev.frame_index,
                    ))
            for idx, value in engine.voice_envelopes():
                out.push(protocol.Env(
                    note_index=idx, value=value, frame_index=frame.frame_index,
                ))
            out.push(protocol.Stats(
                clip_count=engine.clip_count, rms=engine.last_rms,
                frame_lag=state["received"] - engine.frames_processed,
                dropped_events=out.dropped + mailbox.dropped,
            ))

    def _sender_loop(self, transport, out) -> None:
        while True:
            msg = out.pop()
            if msg is None:
                if out.closed:
                    return
                continue
            try:
                transport.send(encode_message(msg))
            except (OSError, ProtocolError):
                return
