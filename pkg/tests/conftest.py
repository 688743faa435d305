"""Shared frame builders and file writers for the test suite."""

import numpy as np
import pytest
from hypothesis import settings

from motiontone.video_io import VideoFrame

settings.register_profile("no_deadline", deadline=None)
settings.load_profile("no_deadline")


@pytest.fixture(scope="session", autouse=True)
def _warm_jit():
    from motiontone.noise import HAVE_NUMBA, ShuffleKey, shuffle
    from motiontone.resonator import warmup_kernels

    if HAVE_NUMBA:
        shuffle(np.zeros(4), ShuffleKey(0, 0))
        warmup_kernels()


def solid_frame(level: int, index: int = 0, width: int = 320, height: int = 240) -> VideoFrame:
    rgb = np.full((height, width, 3), level, dtype=np.uint8)
    return VideoFrame(rgb=rgb, frame_index=index, timestamp=index / 30.0)


def textured_frame(seed: int, index: int = 0, width: int = 320, height: int = 240) -> VideoFrame:
    rng = np.random.default_rng(seed)
    rgb = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    return VideoFrame(rgb=rgb, frame_index=index, timestamp=index / 30.0)


def frame_from_gray(gray: np.ndarray, index: int = 0) -> VideoFrame:
    rgb = np.repeat(np.asarray(gray, dtype=np.uint8)[:, :, None], 3, axis=2)
    return VideoFrame(rgb=rgb, frame_index=index, timestamp=index / 30.0)


def write_pgm(path, gray: np.ndarray) -> None:
    gray = np.asarray(gray, dtype=np.uint8)
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(gray.tobytes())


def write_y4m_mono(path, frames, fps: int = 30) -> None:
    frames = [np.asarray(f, dtype=np.uint8) for f in frames]
    h, w = frames[0].shape
    with open(path, "wb") as f:
        f.write(f"YUV4MPEG2 W{w} H{h} F{fps}:1 Ip A1:1 Cmono\n".encode())
        for fr in frames:
            f.write(b"FRAME\n")
            f.write(fr.tobytes())


def write_y4m_444(path, frames_yuv, fps: int = 30) -> None:
    """frames_yuv: list of (y, cb, cr) uint8 planes."""
    y0 = np.asarray(frames_yuv[0][0])
    h, w = y0.shape
    with open(path, "wb") as f:
        f.write(f"YUV4MPEG2 W{w} H{h} F{fps}:1 Ip A1:1 C444\n".encode())
        for y, cb, cr in frames_yuv:
            f.write(b"FRAME\n")
            for plane in (y, cb, cr):
                f.write(np.asarray(plane, dtype=np.uint8).tobytes())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
