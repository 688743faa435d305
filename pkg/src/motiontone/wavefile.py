"""Mono RIFF/WAVE encoding: pcm16 (default) and float32."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

FORMATS = ("pcm16", "float32")


class WavError(ValueError):
    pass


@dataclass(frozen=True)
class WavSpec:
    sample_rate: int = 48000
    format: str = "pcm16"
    channels: int = 1

    def __post_init__(self):
        if self.format not in FORMATS:
            raise WavError(f"format must be one of {FORMATS}")
        if self.channels != 1:
            raise WavError("only mono is supported")


def encode_wav(samples, spec: WavSpec) -> bytes:
    """Encode samples in [-1, 1] into a complete little-endian WAV file."""
    x = np.asarray(samples, dtype=np.float64)
    if spec.format == "pcm16":
        data = np.clip(np.rint(x * 32767.0), -32767, 32767).astype("<i2").tobytes()
        fmt_tag, bits = 1, 16
    else:
        data = x.astype("<f4").tobytes()
        fmt_tag, bits = 3, 32
    block_align = spec.channels * bits // 8
    fmt = struct.pack(
        "<HHIIHH", fmt_tag, spec.channels, spec.sample_rate,
        spec.sample_rate * block_align, block_align, bits,
    )
    chunks = [b"fmt ", struct.pack("<I", len(fmt)), fmt]
    if fmt_tag == 3:
        # non-PCM formats carry a fact chunk with the frame count
        chunks += [b"fact", struct.pack("<I", 4), struct.pack("<I", len(x))]
    chunks += [b"data", struct.pack("<I", len(data)), data]
    if len(data) % 2:
        chunks.append(b"\x00")
    body = b"".join(chunks)
    return b"RIFF" + struct.pack("<I", 4 + len(body)) + b"WAVE" + body


def decode_wav(data: bytes):
    """Parse a mono WAV back into (samples, WavSpec). pcm16 decodes as s/32767."""
    if data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavError("not a RIFF/WAVE file")
    pos = 12
    fmt_tag = channels = rate = bits = None
    raw = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            fmt_tag, channels, rate = struct.unpack_from("<HHI", body, 0)
            bits = struct.unpack_from("<H", body, 14)[0]
        elif cid == b"data":
            raw = body
        pos += 8 + size + (size % 2)
    if fmt_tag is None or raw is None:
        raise WavError("missing fmt or data chunk")
    if channels != 1:
        raise WavError(f"expected mono, got {channels} channels")
    if fmt_tag == 1 and bits == 16:
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
        spec = WavSpec(sample_rate=rate, format="pcm16")
    elif fmt_tag == 3 and bits == 32:
        samples = np.frombuffer(raw, dtype="<f4")
        spec = WavSpec(sample_rate=rate, format="float32")
    else:
        raise WavError(f"unsupported format tag {fmt_tag} / {bits} bits")
    return samples, spec


def write_wav(path, samples, spec: WavSpec) -> None:
    with open(path, "wb") as f:
        f.write(encode_wav(samples, spec))


def read_wav(path):
    with open(path, "rb") as f:
        return decode_wav(f.read())
