"""Render-run report figures: waveform, spectrogram, and note activity."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_waveform(audio, sample_rate: float, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(10, 3))
    t = np.arange(len(audio)) / sample_rate
    step = max(1, len(audio) // 200_000)
    ax.plot(t[::step], np.asarray(audio)[::step], linewidth=0.4, color="#2a6f97")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("amplitude")
    ax.set_ylim(-1.05, 1.05)
    ax.set_title("rendered output")
    return _save(fig, path)


def plot_spectrogram(audio, sample_rate: float, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(10, 4))
    nfft = 4096 if len(audio) >= 4096 else max(64, 1 << (len(audio).bit_length() - 1))
    ax.specgram(np.asarray(audio), NFFT=nfft, Fs=sample_rate,
                noverlap=nfft // 2, cmap="magma")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("frequency [Hz]")
    ax.set_ylim(0, min(6000, sample_rate / 2))
    ax.set_title("spectrogram")
    return _save(fig, path)


def plot_events(events, env_trace, fps: float, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(10, 4))
    if env_trace:
        trace = np.array(env_trace, dtype=np.float64)
        ax.scatter(trace[:, 0] / fps, trace[:, 1], c=trace[:, 2],
                   cmap="viridis", s=4, vmin=0, vmax=1, label="envelope")
    ons = [ev for ev in events if ev.kind == "note_on"]
    if ons:
        ax.scatter([ev.frame_index / fps for ev in ons],
                   [ev.note_index for ev in ons],
                   c="red", marker="^", s=24, label="note on")
    offs = [ev for ev in events if ev.kind == "note_off"]
    if offs:
        ax.scatter([ev.frame_index / fps for ev in offs],
                   [ev.note_index for ev in offs],
                   c="black", marker="v", s=24, label="note off")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("note index")
    ax.set_ylim(-1, 51)
    ax.set_title("note activity")
    if ons or offs or env_trace:
        ax.legend(loc="upper right", fontsize=8)
    return _save(fig, path)


def render_report(output, fps: float, outdir) -> list:
    """Write the standard figure set for a RenderOutput; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return [
        plot_waveform(output.audio, output.sample_rate, outdir / "waveform.png"),
        plot_spectrogram(output.audio, output.sample_rate, outdir / "spectrogram.png"),
        plot_events(output.events, output.env_trace, fps, outdir / "events.png"),
    ]
