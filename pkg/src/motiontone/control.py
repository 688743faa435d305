"""Motion controller: frame differencing onto a 51x127 grid, gated note events.

Columns map to notes, rows to velocity (top of frame = loudest). A column's
gate opens on its first active frame and holds while motion continues; after
`release_frames` consecutive quiet frames it closes with a note_off. That
hysteresis suppresses flicker retriggers and gives the sustain phase its
meaning: sustained motion, sustained note.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

GRID_COLUMNS = 51
GRID_ROWS = 127

DEFAULT_PIXEL_THRESHOLD = 16.0
DEFAULT_CELL_THRESHOLD = 0.2
DEFAULT_RELEASE_FRAMES = 3


class GridError(ValueError):
    """Mask/frame geometry unusable for the control grid."""


@dataclass
class ChangeMask:
    width: int
    height: int
    bits: np.ndarray  # (height, width) bool


@dataclass
class CellGrid:
    """Fraction of changed pixels per cell; shape (GRID_ROWS, GRID_COLUMNS)."""

    activity: np.ndarray

    def __post_init__(self):
        if self.activity.shape != (GRID_ROWS, GRID_COLUMNS):
            raise GridError(f"cell grid must be {GRID_ROWS}x{GRID_COLUMNS}")


@dataclass
class NoteEvent:
    kind: str  # "note_on" | "note_off"
    note_index: int
    column: int
    row: int
    frame_index: int
    freq_hz: float = 0.0
    velocity: int | None = None  # present iff note_on

    def __post_init__(self):
        if self.kind not in ("note_on", "note_off"):
            raise ValueError(f"bad event kind {self.kind!r}")
        if (self.velocity is not None) != (self.kind == "note_on"):
            raise ValueError("velocity present iff note_on")
        if self.note_index != self.column:
            raise ValueError("note_index must equal column")


@dataclass
class GateState:
    """Per-column gate automaton state."""

    open: np.ndarray = None
    inactive_frames: np.ndarray = None
    last_row: np.ndarray = None

    def __post_init__(self):
        if self.open is None:
            self.open = np.zeros(GRID_COLUMNS, dtype=bool)
        if self.inactive_frames is None:
            self.inactive_frames = np.zeros(GRID_COLUMNS, dtype=np.int64)
        if self.last_row is None:
            self.last_row = np.zeros(GRID_COLUMNS, dtype=np.int64)


def frame_diff(prev, cur, pixel_threshold: float = DEFAULT_PIXEL_THRESHOLD) -> ChangeMask:
    """Mark pixels whose luminance moved by more than the threshold."""
    if (prev.width, prev.height) != (cur.width, cur.height):
        raise GridError(
            f"frame size changed: {prev.width}x{prev.height} -> {cur.width}x{cur.height}"
        )
    bits = np.abs(cur.values - prev.values) > pixel_threshold
    return ChangeMask(width=cur.width, height=cur.height, bits=bits)


@lru_cache(maxsize=8)
def _cell_map(width: int, height: int):
    """Flat pixel->cell index map and per-cell pixel totals for a geometry."""
    xs = (np.arange(width, dtype=np.int64) * GRID_COLUMNS) // width
    ys = (np.arange(height, dtype=np.int64) * GRID_ROWS) // height
    flat = (ys[:, None] * GRID_COLUMNS + xs[None, :]).ravel()
    totals = np.bincount(flat, minlength=GRID_ROWS * GRID_COLUMNS).astype(np.float64)
    return flat, totals


def grid_reduce(mask: ChangeMask) -> CellGrid:
    """Reduce a change mask to per-cell changed-pixel fractions."""
    if mask.width < GRID_COLUMNS or mask.height < GRID_ROWS:
        raise GridError(
            f"mask {mask.width}x{mask.height} smaller than grid {GRID_COLUMNS}x{GRID_ROWS}"
        )
    flat, totals = _cell_map(mask.width, mask.height)
    changed = np.bincount(flat, weights=mask.bits.ravel(),
                          minlength=GRID_ROWS * GRID_COLUMNS)
    activity = (changed / totals).reshape(GRID_ROWS, GRID_COLUMNS)
    return CellGrid(activity=activity)


def velocity_from_row(row: int) -> int:
    """Top of frame plays loudest: velocity = 127 - row."""
    if not 0 <= row < GRID_ROWS:
        raise GridError(f"row {row} out of range 0..{GRID_ROWS - 1}")
    return 127 - row


def detect_events(grid: CellGrid, gate: GateState,
                  cell_threshold: float = DEFAULT_CELL_THRESHOLD,
                  release_frames: int = DEFAULT_RELEASE_FRAMES,
                  frame_index: int = 0,
                  freqs=None) -> tuple[list[NoteEvent], GateState]:
    """Turn cell activity into gated note_on/note_off events (updates `gate`).

    A column is active when any of its cells reaches `cell_threshold`. New
    activity opens the gate with the activity-weighted centroid row; the gate
    closes (note_off) only after `release_frames` consecutive inactive frames.
    """
    if not 0 < cell_threshold <= 1:
        raise GridError("cell_threshold must lie in (0, 1]")
    if release_frames < 1:
        raise GridError("release_frames must be >= 1")
    act = grid.activity
    active_cols = np.flatnonzero((act >= cell_threshold).any(axis=0))
    active = np.zeros(GRID_COLUMNS, dtype=bool)
    active[active_cols] = True

    events: list[NoteEvent] = []
    rows = np.arange(GRID_ROWS, dtype=np.float64)
    for col in range(GRID_COLUMNS):
        if active[col]:
            gate.inactive_frames[col] = 0
            if not gate.open[col]:
                weights = act[:, col]
                row = int(round(float(np.dot(rows, weights) / weights.sum())))
                gate.open[col] = True
                gate.last_row[col] = row
                events.append(NoteEvent(
                    kind="note_on", note_index=col, column=col, row=row,
                    frame_index=frame_index,
                    freq_hz=float(freqs[col]) if freqs is not None else 0.0,
                    velocity=velocity_from_row(row),
                ))
        elif gate.open[col]:
            gate.inactive_frames[col] += 1
            if gate.inactive_frames[col] >= release_frames:
                gate.open[col] = False
                gate.inactive_frames[col] = 0
                events.append(NoteEvent(
                    kind="note_off", note_index=col, column=col,
                    row=int(gate.last_row[col]), frame_index=frame_index,
                    freq_hz=float(freqs[col]) if freqs is not None else 0.0,
                ))
    return events, gate
