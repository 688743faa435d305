"""Per-frame pipeline: noise synthesis, motion gating, voice render, mix.

One Engine owns 51 voices (one per grid column), the motion gate state, and
preallocated audio scratch buffers. process_frame never allocates sample
buffers after configure(); offline rendering folds it over a frame stream
and is bit-deterministic for a fixed (input, config, seed) triple.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import control, noise, resonator
from .notes import SCALES, ConfigError, NoteTable, build_note_table
from .video_io import VideoFrame

if resonator.HAVE_NUMBA:
    from .resonator import _gain_clip_nb


@dataclass
class EngineConfig:
    sample_rate: float = 48000.0
    fps: float = 30.0
    session_seed: int = 0
    root_pitch_class: int = 0
    scale_intervals: tuple = SCALES["major"]
    midi_span: tuple = (21, 108)
    q_min: float = 5.0
    q_max: float = 1000.0
    attack_s: float = 0.08
    release_s: float = 0.6
    partial_spec: tuple = resonator.DEFAULT_PARTIALS
    pixel_threshold: float = 16.0
    cell_threshold: float = 0.2
    release_frames: int = 3
    block_size: int = 64
    master_gain: float = 0.7

    def __post_init__(self):
        if self.sample_rate <= 0 or self.fps <= 0:
            raise ConfigError("sample_rate and fps must be positive")
        if self.attack_s <= 0 or self.release_s <= 0:
            raise ConfigError("attack_s and release_s must be positive")
        if self.block_size < 1:
            raise ConfigError("block_size must be >= 1")
        if not 0 < self.q_min < self.q_max:
            raise ConfigError("need 0 < q_min < q_max")

    # Fields safe to patch mid-session without rebuilding voices.
    LIVE_PATCHABLE = ("attack_s", "release_s", "q_min", "q_max", "pixel_threshold",
                      "cell_threshold", "release_frames", "master_gain")


@dataclass
class RenderOutput:
    audio: np.ndarray
    events: list
    env_trace: list  # (frame_index, note_index, envelope value)
    clip_count: int
    sample_rate: float


class Engine:
    def __init__(self, config: EngineConfig, record_env_trace: bool = False):
        self.config = config
        self.table: NoteTable = build_note_table(
            config.root_pitch_class, config.scale_intervals, config.midi_span
        )
        self._freqs = np.array(self.table.freqs)
        q_range = resonator.QRange(config.q_min, config.q_max)
        self.voices = [
            resonator.NoteVoice.create(
                e.note_index, e.freq_hz, config.sample_rate,
                partial_spec=config.partial_spec, attack_s=config.attack_s,
                release_s=config.release_s, q_range=q_range,
            )
            for e in self.table.entries
        ]
        self.gate = control.GateState()
        self.record_env_trace = record_env_trace
        self.env_trace: list = []
        self.clip_count = 0
        self.frames_processed = 0
        self._prev_mono = None
        self._sample_acc = 0.0
        self._next_index = 0
        # Scratch buffers are allocated in configure() and on the first frame
        # (geometry-sized), then reused: the steady-state frame path performs
        # no buffer allocation. buffer_allocs is the instrumentation hook the
        # benchmark asserts stays flat.
        self.buffer_allocs = 0
        self._mix_capacity = int(np.ceil(config.sample_rate / config.fps)) + 1
        self._mix = self._alloc_buffer(self._mix_capacity)
        self._segment_buf = self._alloc_buffer(self._mix_capacity)
        self._geometry = None
        self._mono_cur = None
        self._mono_alt = None
        self._flat = None
        self._shuffled = None
        self.last_rms = 0.0

    def _alloc_buffer(self, n) -> np.ndarray:
        self.buffer_allocs += 1
        return np.zeros(n)

    def _ensure_geometry(self, frame: VideoFrame) -> None:
        shape = (frame.height, frame.width)
        if self._geometry == shape:
            return
        self._geometry = shape
        self._mono_cur = noise.MonoFrame(frame.width, frame.height,
                                         self._alloc_buffer(shape))
        self._mono_alt = noise.MonoFrame(frame.width, frame.height,
                                         self._alloc_buffer(shape))
        self._flat = self._alloc_buffer(frame.width * frame.height)
        self._shuffled = self._alloc_buffer(frame.width * frame.height)
        self._prev_mono = None  # differencing restarts across geometry changes

    def voice_envelopes(self):
        """(note_index, envelope value) for every non-idle voice."""
        return [(v.note_index, v.envelope.value) for v in self.voices if not v.idle]

    def apply_patch(self, patch: dict) -> None:
        """Apply a partial config update; envelope/detection fields take effect
        on the next frame, scale changes rebuild all voices."""
        unknown = set(patch) - set(EngineConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        rebuild_keys = set(patch) - set(EngineConfig.LIVE_PATCHABLE)
        self.config = replace(self.config, **patch)
        if rebuild_keys:
            fresh = Engine(self.config, self.record_env_trace)
            self.__dict__.update(fresh.__dict__)
            return
        q_range = resonator.QRange(self.config.q_min, self.config.q_max)
        for v in self.voices:
            v.q_range = q_range
            v.envelope.attack_s = self.config.attack_s
            v.envelope.release_s = self.config.release_s

    def process_frame(self, frame: VideoFrame):
        """Run the full pipeline for one frame.

        Returns (audio, events); `audio` is a view into an internal buffer
        valid until the next call.
        """
        if frame.frame_index < self._next_index:
            raise ConfigError(
                f"frame index {frame.frame_index} out of order (expected >= {self._next_index})"
            )
        cfg = self.config
        self._ensure_geometry(frame)
        mono = noise.to_monochrome(frame, out=self._mono_cur.values)
        mono = self._mono_cur
        flat = noise.normalize(mono, out=self._flat)
        shuffled = noise.shuffle(flat, noise.ShuffleKey(cfg.session_seed, frame.frame_index),
                                 out=self._shuffled)
        count, self._sample_acc = noise.samples_per_frame(
            cfg.sample_rate, cfg.fps, self._sample_acc
        )
        if count > self._mix_capacity:
            self._mix_capacity = count
            self._mix = self._alloc_buffer(count)
            self._segment_buf = self._alloc_buffer(count)
        segment = noise.take_segment(shuffled, count, frame.frame_index, cfg.sample_rate,
                                     out=self._segment_buf)

        events: list[control.NoteEvent] = []
        if self._prev_mono is not None:
            mask = control.frame_diff(self._prev_mono, mono, cfg.pixel_threshold)
            grid = control.grid_reduce(mask)
            events, _ = control.detect_events(
                grid, self.gate, cfg.cell_threshold, cfg.release_frames,
                frame.frame_index, freqs=self._freqs,
            )
        # ping-pong the two mono planes: current becomes previous, the old
        # previous is overwritten next frame
        self._prev_mono = self._mono_cur
        self._mono_cur, self._mono_alt = self._mono_alt, self._mono_cur

        for ev in events:
            voice = self.voices[ev.note_index]
            if ev.kind == "note_on":
                voice.note_on(ev.velocity / 127.0)
            else:
                voice.note_off()

        mix = self._mix[:count]
        mix[:] = 0.0
        for voice in self.voices:
            if voice.idle:
                continue
            resonator.render_voice_into(voice, segment.samples, mix, cfg.block_size)
        if resonator.HAVE_NUMBA:
            clips = int(_gain_clip_nb(mix, cfg.master_gain))
        else:
            mix *= cfg.master_gain
            clips = int(np.count_nonzero(np.abs(mix) > 1.0))
            np.clip(mix, -1.0, 1.0, out=mix)
        self.clip_count += clips

        if self.record_env_trace:
            for idx, value in self.voice_envelopes():
                self.env_trace.append((frame.frame_index, idx, value))
        self.last_rms = float(np.sqrt(np.dot(mix, mix) / count)) if count else 0.0
        self.frames_processed += 1
        self._next_index = frame.frame_index + 1
        return mix, events


def configure(cfg: EngineConfig, record_env_trace: bool = False) -> Engine:
    return Engine(cfg, record_env_trace)


def master_mix(voice_outputs, master_gain: float):
    """Sum voice buffers, apply master gain, hard-clamp to [-1, 1].

    Returns (samples, clip_count). Loudness intentionally does not depend on
    polyphony; velocity already bounds per-voice gain.
    """
    outputs = [np.asarray(v, dtype=np.float64) for v in voice_outputs]
    if not outputs:
        return np.zeros(0), 0
    n = len(outputs[0])
    if any(len(v) != n for v in outputs):
        raise ValueError("voice outputs must have equal lengths")
    mix = np.sum(outputs, axis=0) * master_gain
    clip_count = int(np.count_nonzero(np.abs(mix) > 1.0))
    np.clip(mix, -1.0, 1.0, out=mix)
    return mix, clip_count


def render_offline(engine: Engine, stream) -> RenderOutput:
    """Fold process_frame over a stream; deterministic for fixed seed/config."""
    if engine.frames_processed:
        raise ConfigError("render_offline needs a fresh engine")
    engine.record_env_trace = True
    chunks = []
    events: list[control.NoteEvent] = []
    for frame in stream:
        audio, frame_events = engine.process_frame(frame)
        chunks.append(audio.copy())
        events.extend(frame_events)
    audio = np.concatenate(chunks) if chunks else np.zeros(0)
    return RenderOutput(
        audio=audio, events=events, env_trace=list(engine.env_trace),
        clip_count=engine.clip_count, sample_rate=engine.config.sample_rate,
    )
