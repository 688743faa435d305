"""Real-time budget harness: per-frame latency and audio-path allocations.

The scene is a fixed random texture with eight toggling blocks, one per
chosen grid column, so exactly eight voices hold their gates open while the
rest of the frame stays quiet. Timing runs untraced; the allocation check is
a separate pass with tracemalloc so instrumentation cost never pollutes the
latency numbers.

"No allocation on the audio path" for a garbage-collected runtime means:
the engine's sample buffers are allocated once in configure() (the
`buffer_allocs` counter must stay flat across the run), and steady-state
frames add no net traced memory (transient interpreter objects are allowed,
growth is not).
"""

from __future__ import annotations

import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from .engine import Engine, EngineConfig
from .resonator import warmup_kernels
from .video_io import VideoFrame


@dataclass
class BenchResult:
    frames: int
    active_voices: int
    mean_ms: float
    p50_ms: float
    p99_ms: float
    max_ms: float
    buffer_allocs: int
    net_traced_kib: float

    def within_budget(self, mean_budget_ms: float = 33.0, p99_budget_ms: float = 50.0) -> bool:
        return (self.mean_ms < mean_budget_ms and self.p99_ms < p99_budget_ms
                and self.buffer_allocs == 0)


def _column_pixel_range(col: int, width: int) -> np.ndarray:
    xs = np.arange(width)
    return xs[(xs * 51) // width == col]


def make_toggle_scene(width: int = 320, height: int = 240, voices: int = 8,
                      seed: int = 99):
    """frame(i) -> VideoFrame with `voices` columns toggling every frame."""
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    cols = np.linspace(2, 48, voices).round().astype(int)
    blocks = []
    for c in cols:
        xs = _column_pixel_range(int(c), width)
        y0 = height // 2
        blocks.append((xs, slice(y0, y0 + 8)))

    def frame(i: int) -> VideoFrame:
        rgb = base.copy()
        level = 255 if i % 2 else 0
        for xs, ys in blocks:
            rgb[ys, xs.min():xs.max() + 1, :] = level
        return VideoFrame(rgb=rgb, frame_index=i, timestamp=i / 30.0)

    return frame


def run_benchmark(frames: int = 300, width: int = 320, height: int = 240,
                  voices: int = 8, warmup: int = 12,
                  check_allocations: bool = True) -> BenchResult:
    warmup_kernels()
    scene = make_toggle_scene(width, height, voices)

    engine = Engine(EngineConfig())
    for i in range(warmup):
        engine.process_frame(scene(i))
    active = len(engine.voice_envelopes())

    allocs_before = engine.buffer_allocs
    times = np.zeros(frames)
    for k in range(frames):
        frame = scene(warmup + k)
        t0 = time.perf_counter()
        engine.process_frame(frame)
        times[k] = time.perf_counter() - t0
    buffer_allocs = engine.buffer_allocs - allocs_before

    net_kib = 0.0
    if check_allocations:
        engine2 = Engine(EngineConfig())
        for i in range(warmup):
            engine2.process_frame(scene(i))
        allocs_settled = engine2.buffer_allocs
        tracemalloc.start()
        base_current, _ = tracemalloc.get_traced_memory()
        for k in range(60):
            engine2.process_frame(scene(warmup + k))
        current, _ = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        net_kib = (current - base_current) / 1024.0
        buffer_allocs += engine2.buffer_allocs - allocs_settled

    return BenchResult(
        frames=frames,
        active_voices=active,
        mean_ms=float(times.mean() * 1000),
        p50_ms=float(np.percentile(times, 50) * 1000),
        p99_ms=float(np.percentile(times, 99) * 1000),
        max_ms=float(times.max() * 1000),
        buffer_allocs=buffer_allocs,
        net_traced_kib=net_kib,
    )


def format_result(r: BenchResult) -> str:
    lines = [
        f"frames         {r.frames}",
        f"active voices  {r.active_voices}",
        f"mean           {r.mean_ms:.3f} ms",
        f"p50            {r.p50_ms:.3f} ms",
        f"p99            {r.p99_ms:.3f} ms",
        f"max            {r.max_ms:.3f} ms",
        f"buffer allocs  {r.buffer_allocs}",
        f"net traced     {r.net_traced_kib:.1f} KiB",
    ]
    return "\n".join(lines)
