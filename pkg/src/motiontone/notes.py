"""Musical note table: 51 scale notes spanning the piano, one per grid column."""

from __future__ import annotations

from dataclasses import dataclass

GRID_COLUMNS = 51

SCALES = {
    "major": (0, 2, 4, 5, 7, 9, 11),
    "chromatic": tuple(range(12)),
}

PITCH_CLASSES = {
    "C": 0, "C#": 1, "DB": 1, "D": 2, "D#": 3, "EB": 3, "E": 4, "F": 5,
    "F#": 6, "GB": 6, "G": 7, "G#": 8, "AB": 8, "A": 9, "A#": 10, "BB": 10, "B": 11,
}


class ConfigError(ValueError):
    """Configuration cannot produce a valid 51-note table."""


@dataclass(frozen=True)
class NoteEntry:
    note_index: int
    midi: int
    freq_hz: float


@dataclass
class NoteTable:
    entries: list[NoteEntry]
    root_pitch_class: int
    scale_intervals: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> NoteEntry:
        return self.entries[i]

    @property
    def freqs(self) -> list[float]:
        return [e.freq_hz for e in self.entries]


def midi_to_freq(midi: int) -> float:
    """12-TET frequency, A4 (midi 69) = 440 Hz."""
    if not 0 <= midi <= 127:
        raise ConfigError(f"midi note {midi} out of range 0..127")
    return 440.0 * 2.0 ** ((midi - 69) / 12.0)


def parse_pitch_class(name: str) -> int:
    try:
        return PITCH_CLASSES[name.strip().upper()]
    except KeyError:
        raise ConfigError(f"unknown pitch class {name!r}") from None


def build_note_table(root_pitch_class: int = 0,
                     scale_intervals=SCALES["major"],
                     midi_span: tuple[int, int] = (21, 108)) -> NoteTable:
    """All scale notes in the span, ascending, truncated from the top to 51.

    The C-major default over the 88-key span yields 52 white keys; the
    highest is dropped so columns and notes stay one-to-one.
    """
    intervals = tuple(sorted(set(int(i) % 12 for i in scale_intervals)))
    if not intervals:
        raise ConfigError("scale_intervals must be non-empty")
    lo, hi = midi_span
    if not (0 <= lo <= hi <= 127):
        raise ConfigError(f"bad midi span {midi_span}")
    classes = {(root_pitch_class + i) % 12 for i in intervals}
    midis = [m for m in range(lo, hi + 1) if m % 12 in classes]
    if len(midis) < GRID_COLUMNS:
        raise ConfigError(
            f"scale over span {midi_span} yields {len(midis)} notes; need {GRID_COLUMNS}"
        )
    midis = midis[:GRID_COLUMNS]
    entries = [NoteEntry(i, m, midi_to_freq(m)) for i, m in enumerate(midis)]
    return NoteTable(entries=entries, root_pitch_class=root_pitch_class % 12,
                     scale_intervals=intervals)
