"""motiontone: video frames in, motion-played filtered-noise notes out."""

from .control import GRID_COLUMNS, GRID_ROWS, NoteEvent
from .engine import Engine, EngineConfig, RenderOutput, configure, master_mix, render_offline
from .noise import NoiseSegment, ShuffleKey
from .notes import NoteTable, build_note_table, midi_to_freq
from .resonator import AsrEnvelope, NoteVoice, QRange, design_bandpass, voice_render
from .video_io import FrameMailbox, SourceDescriptor, VideoFrame, open_source
from .wavefile import WavSpec, decode_wav, encode_wav

__version__ = "0.1.0"

__all__ = [
    "AsrEnvelope", "Engine", "EngineConfig", "FrameMailbox", "GRID_COLUMNS",
    "GRID_ROWS", "NoiseSegment", "NoteEvent", "NoteTable", "NoteVoice", "QRange",
    "RenderOutput", "ShuffleKey", "SourceDescriptor", "VideoFrame", "WavSpec",
    "build_note_table", "configure", "decode_wav", "design_bandpass", "encode_wav",
    "master_mix", "midi_to_freq", "open_source", "render_offline", "voice_render",
]
