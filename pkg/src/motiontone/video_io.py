"""Frame sources: PGM/PNG image sequences, Y4M files, and a live mailbox.

Every source yields validated VideoFrames with a contiguous 0-based index.
Frames smaller than the 51x127 control grid are rejected outright; silent
upscaling would fabricate control resolution.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MIN_WIDTH = 51
MIN_HEIGHT = 127

IMAGE_SUFFIXES = (".pgm", ".png")


class SourceError(Exception):
    """Source cannot be opened or decoded."""


class DimensionError(SourceError):
    """Frame too small for the 51x127 control grid."""


@dataclass
class VideoFrame:
    """One RGB frame; `rgb` is (height, width, 3) uint8."""

    rgb: np.ndarray
    frame_index: int
    timestamp: float

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb)
        if self.rgb.dtype != np.uint8 or self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise SourceError("frame pixels must be (h, w, 3) uint8")
        h, w = self.rgb.shape[:2]
        if w < MIN_WIDTH or h < MIN_HEIGHT:
            raise DimensionError(
                f"frame {w}x{h} below the {MIN_WIDTH}x{MIN_HEIGHT} control-grid floor"
            )

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]


@dataclass
class SourceDescriptor:
    kind: str  # "images" | "y4m" | "live"
    path: object = None  # str/Path for files, FrameMailbox for live
    declared_fps: float = 30.0

    def __post_init__(self):
        if self.kind not in ("images", "y4m", "live"):
            raise SourceError(f"unknown source kind {self.kind!r}")
        if self.declared_fps <= 0:
            raise SourceError("declared_fps must be > 0")


def gray_to_rgb(gray: np.ndarray) -> np.ndarray:
    """Replicate one 8-bit channel into r=g=b."""
    return np.repeat(np.asarray(gray, dtype=np.uint8)[:, :, None], 3, axis=2)


# --- image sequence -------------------------------------------------------

def _load_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if data[:2] != b"P5":
        raise SourceError(f"{path}: not a binary PGM (P5) file")
    # Header tokens may be separated by any whitespace; '#' starts a comment.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise SourceError(f"{path}: truncated PGM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise SourceError(f"{path}: bad PGM header") from exc
    if maxval != 255:
        raise SourceError(f"{path}: only maxval 255 PGM supported (got {maxval})")
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise SourceError(f"{path}: PGM raster truncated")
    gray = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return gray_to_rgb(gray)


def _load_png(path: Path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as img:
            if img.mode == "L":
                return gray_to_rgb(np.asarray(img))
            if img.mode != "RGB":
                img = img.convert("RGB")
            return np.asarray(img, dtype=np.uint8)
    except SourceError:
        raise
    except Exception as exc:
        raise SourceError(f"{path}: cannot decode PNG ({exc})") from exc


class ImageSequenceStream:
    """Frames from a directory of PGM/PNG files in lexicographic name order."""

    def __init__(self, directory: Path, fps: float):
        self.fps = fps
        self._paths = sorted(
            p for p in Path(directory).iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not self._paths:
            raise SourceError(f"no frames in {directory}")
        self._next = 0

    def __iter__(self):
        return self

    def __next__(self) -> VideoFrame:
        if self._next >= len(self._paths):
            raise StopIteration
        path = self._paths[self._next]
        rgb = _load_pgm(path) if path.suffix.lower() == ".pgm" else _load_png(path)
        frame = VideoFrame(rgb=rgb, frame_index=self._next, timestamp=self._next / self.fps)
        self._next += 1
        return frame


# --- Y4M ------------------------------------------------------------------

_BT601_FULL = np.array(
    [[1.0, 0.0, 1.402], [1.0, -0.344136, -0.714136], [1.0, 1.772, 0.0]]
)


def _ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    ycc = np.stack([y, cb - 128.0, cr - 128.0], axis=-1)
    rgb = ycc @ _BT601_FULL.T
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


class Y4MStream:
    """FRAME-delimited YUV4MPEG2 reader; 4:4:4 and mono only."""

    def __init__(self, path: Path, fps_override: float | None = None):
        self._f = open(path, "rb")
        header = self._f.readline()
        if not header.startswith(b"YUV4MPEG2"):
            self._f.close()
            raise SourceError(f"{path}: not a Y4M file")
        self.width = self.height = 0
        self.fps = 0.0
        colorspace = "420"
        for tok in header.split()[1:]:
            tag, val = tok[:1], tok[1:].decode("ascii", "replace")
            if tag == b"W":
                self.width = int(val)
            elif tag == b"H":
                self.height = int(val)
            elif tag == b"F":
                num, den = val.split(":")
                self.fps = int(num) / int(den)
            elif tag == b"C":
                colorspace = val
        if self.width <= 0 or self.height <= 0:
            self._f.close()
            raise SourceError(f"{path}: Y4M header missing dimensions")
        if colorspace.startswith("444"):
            self._mono = False
        elif colorspace.startswith("mono"):
            self._mono = True
        else:
            self._f.close()
            raise SourceError(f"{path}: unsupported Y4M colorspace C{colorspace} "
                              "(only 444 and mono)")
        if fps_override:
            self.fps = fps_override
        if self.fps <= 0:
            self.fps = 30.0
        self._index = 0
        # Peek one frame so an empty file fails at open time.
        self._pending = self._read_frame()
        if self._pending is None:
            self._f.close()
            raise SourceError(f"{path}: no frames")

    def _read_frame(self) -> np.ndarray | None:
        marker = self._f.readline()
        if not marker:
            return None
        if not marker.startswith(b"FRAME"):
            raise SourceError("Y4M: bad FRAME marker")
        plane = self.width * self.height
        nplanes = 1 if self._mono else 3
        raw = self._f.read(plane * nplanes)
        if len(raw) != plane * nplanes:
            raise SourceError("Y4M: truncated frame payload")
        planes = np.frombuffer(raw, dtype=np.uint8).reshape(nplanes, self.height, self.width)
        if self._mono:
            return gray_to_rgb(planes[0])
        return _ycbcr_to_rgb(*(planes.astype(np.float64)))

    def __iter__(self):
        return self

    def __next__(self) -> VideoFrame:
        if self._pending is not None:
            rgb, self._pending = self._pending, None
        else:
            rgb = self._read_frame()
            if rgb is None:
                self._f.close()
                raise StopIteration
        frame = VideoFrame(rgb=rgb, frame_index=self._index, timestamp=self._index / self.fps)
        self._index += 1
        return frame


# --- live adapter ---------------------------------------------------------

class FrameMailbox:
    """Single-slot handoff between one producer and one consumer.

    `put` overwrites any unconsumed frame (latest wins); `get` blocks up to
    `timeout` seconds. `dropped` counts overwritten frames.
    """

    def __init__(self):
        self._cond = threading.Condition()
        self._slot = None
        self._closed = False
        self.dropped = 0

    def put(self, frame: VideoFrame) -> None:
        with self._cond:
            if self._slot is not None:
                self.dropped += 1
            self._slot = frame
            self._cond.notify()

    def get(self, timeout: float | None = None) -> VideoFrame | None:
        with self._cond:
            if self._slot is None and not self._closed:
                self._cond.wait(timeout)
            frame, self._slot = self._slot, None
            return frame

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        with self._cond:
            return self._closed and self._slot is None


class LiveStream:
    """Pull-based view of a FrameMailbox; ends when the mailbox closes."""

    def __init__(self, mailbox: FrameMailbox, fps: float):
        self.mailbox = mailbox
        self.fps = fps

    def __iter__(self):
        return self

    def __next__(self) -> VideoFrame:
        while True:
            frame = self.mailbox.get(timeout=0.1)
            if frame is not None:
                return frame
            if self.mailbox.closed:
                raise StopIteration


def open_source(desc: SourceDescriptor):
    """Open a descriptor into a frame stream (an iterator of VideoFrames)."""
    if desc.kind == "images":
        path = Path(desc.path)
        if not path.is_dir():
            raise SourceError(f"{path}: not a directory")
        return ImageSequenceStream(path, desc.declared_fps)
    if desc.kind == "y4m":
        path = Path(desc.path)
        if not path.is_file():
            raise SourceError(f"{path}: no such file")
        return Y4MStream(path)
    if not isinstance(desc.path, FrameMailbox):
        raise SourceError("live source needs a FrameMailbox handle")
    return LiveStream(desc.path, desc.declared_fps)


def next_frame(stream) -> VideoFrame | None:
    """Pull one frame; None at end-of-stream."""
    return next(stream, None)
