"""Newline-delimited JSON note-event logs."""

from __future__ import annotations

import json

from .control import NoteEvent


def event_to_dict(ev: NoteEvent) -> dict:
    d = {
        "kind": ev.kind,
        "note_index": ev.note_index,
        "column": ev.column,
        "row": ev.row,
        "frame_index": ev.frame_index,
        "freq_hz": ev.freq_hz,
    }
    if ev.kind == "note_on":
        d["velocity"] = ev.velocity
    return d


def event_from_dict(d: dict) -> NoteEvent:
    return NoteEvent(
        kind=d["kind"], note_index=d["note_index"], column=d["column"],
        row=d["row"], frame_index=d["frame_index"], freq_hz=d.get("freq_hz", 0.0),
        velocity=d.get("velocity"),
    )


def encode_lines(events) -> str:
    return "".join(
        json.dumps(event_to_dict(ev), sort_keys=True, separators=(",", ":")) + "\n"
        for ev in events
    )


def write_event_log(path, events) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(encode_lines(events))


def read_event_log(path) -> list[NoteEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                events.append(event_from_dict(json.loads(line)))
    return events
