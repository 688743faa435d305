"""Per-frame noise source: monochrome average, [-1,1] scaling, keyed shuffle.

The shuffle is a Fisher-Yates walk driven by a counter-based generator:
SplitMix64 outputs (Vigna's finalizer, golden-gamma increment) keyed by
(session_seed, frame_index). Same key and length always give the same
permutation, so segments can be recomputed after seeking or in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit, uint64

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class NoiseError(ValueError):
    """Bad input to the noise pipeline (empty buffer, non-positive rate)."""


@dataclass
class MonoFrame:
    """Luminance plane, row-major float values in [0, 255]."""

    width: int
    height: int
    values: np.ndarray  # shape (height, width), float64

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.height, self.width):
            raise NoiseError(
                f"mono plane shape {self.values.shape} != ({self.height}, {self.width})"
            )


@dataclass
class NoiseSegment:
    """Audio-rate noise buffer derived from one video frame."""

    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: float
    frame_index: int


@dataclass(frozen=True)
class ShuffleKey:
    session_seed: int
    frame_index: int

    def mixed(self) -> int:
        """Collapse (seed, frame) into one 64-bit stream key."""
        return _mix64_py(_mix64_py(self.session_seed & _MASK64) ^ (self.frame_index & _MASK64))


def _mix64_py(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def counter_rand(key: int, counter: int) -> int:
    """j-th SplitMix64 output of the stream rooted at `key`."""
    return _mix64_py((key + ((counter + 1) * _GOLDEN)) & _MASK64)


if HAVE_NUMBA:

    @njit(cache=True)
    def _shuffle_kernel(values, key):  # pragma: no cover - exercised via shuffle()
        n = values.shape[0]
        for i in range(n - 1, 0, -1):
            x = uint64(key) + (uint64(n - 1 - i) + uint64(1)) * uint64(0x9E3779B97F4A7C15)
            x = (x ^ (x >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
            x = (x ^ (x >> uint64(27))) * uint64(0x94D049BB133111EB)
            x = x ^ (x >> uint64(31))
            j = int(x % uint64(i + 1))
            tmp = values[i]
            values[i] = values[j]
            values[j] = tmp


def _shuffle_fallback(values: np.ndarray, key: int) -> None:
    for i in range(len(values) - 1, 0, -1):
        j = counter_rand(key, len(values) - 1 - i) % (i + 1)
        values[i], values[j] = values[j], values[i]


def to_monochrome(frame, out: np.ndarray | None = None) -> MonoFrame:
    """Average the three color channels per pixel; keeps full float precision.

    `out`, when given, is a preallocated (height, width) float64 buffer; the
    hot path reuses one instead of allocating per frame.
    """
    rgb = frame.rgb
    if out is None:
        out = np.empty((frame.height, frame.width))
    np.add(rgb[:, :, 0], rgb[:, :, 1], out=out, dtype=np.float64)
    np.add(out, rgb[:, :, 2], out=out, dtype=np.float64)
    np.divide(out, 3.0, out=out)
    return MonoFrame(width=frame.width, height=frame.height, values=out)


def normalize(mono: MonoFrame, out: np.ndarray | None = None) -> np.ndarray:
    """Map [0, 255] luminance onto [-1, 1]: s = v/127.5 - 1 (flat, row-major)."""
    flat = mono.values.reshape(-1)
    if out is None:
        out = np.empty(flat.shape)
    np.divide(flat, 127.5, out=out)
    np.subtract(out, 1.0, out=out)
    return out


def shuffle(samples: np.ndarray, key: ShuffleKey,
            out: np.ndarray | None = None) -> np.ndarray:
    """Return a keyed permutation of `samples` (input untouched)."""
    if len(samples) == 0:
        raise NoiseError("cannot shuffle an empty buffer")
    if out is None:
        out = np.array(samples, dtype=np.float64, copy=True)
    else:
        if out is samples or np.shares_memory(out, samples):
            raise NoiseError("shuffle out buffer must not alias the input")
        np.copyto(out, samples)
    k = key.mixed()
    if HAVE_NUMBA:
        _shuffle_kernel(out, np.uint64(k))
    else:
        _shuffle_fallback(out, k)
    return out


def samples_per_frame(sample_rate: float, fps: float, accumulator: float) -> tuple[int, float]:
    """Integer sample count for the next frame plus the carried remainder.

    Long-run average of counts equals sample_rate/fps; each call floors the
    accumulated quota and keeps the fraction.
    """
    if sample_rate <= 0 or fps <= 0:
        raise NoiseError("sample_rate and fps must be positive")
    accumulator += sample_rate / fps
    count = math.floor(accumulator)
    return count, accumulator - count


def take_segment(permuted: np.ndarray, count: int, frame_index: int,
                 sample_rate: float = 48000.0,
                 out: np.ndarray | None = None) -> NoiseSegment:
    """First `count` entries of the permuted buffer, cycling if it is shorter."""
    if count < 1:
        raise NoiseError("segment count must be >= 1")
    n = len(permuted)
    if out is not None:
        samples = out[:count]
        for start in range(0, count, n):
            stop = min(start + n, count)
            np.copyto(samples[start:stop], permuted[: stop - start])
    elif count <= n:
        samples = permuted[:count].copy()
    else:
        reps = -(-count // n)
        samples = np.tile(permuted, reps)[:count]
    return NoiseSegment(samples=samples, sample_rate=sample_rate, frame_index=frame_index)
