"""Resonant band-pass voices: narrow biquads per note, ASR-coupled gain and Q.

Each voice is a group of constant-peak-gain band-pass filters (fundamental
plus partials) fed from the frame noise. One ASR envelope per voice drives
both the output amplitude and the filter Q, so notes sharpen out of noise on
the attack and dissolve back into it on the release.

Filters run in direct form II transposed; coefficients are recomputed once
per block from the current envelope value, states carried across changes.
The block loop is compiled with numba when available, with a scipy.signal
fallback implementing the identical recurrence.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

from .noise import NoiseSegment

DEFAULT_PARTIALS = ((2, 0.5), (3, 0.25))
PARTIAL_FREQ_CUTOFF = 0.45  # of sample rate; higher partials are dropped


class FilterDesignError(ValueError):
    """Center frequency or Q outside the designable range."""


@dataclass(frozen=True)
class QRange:
    q_min: float = 5.0
    q_max: float = 1000.0

    def __post_init__(self):
        if not 0 < self.q_min < self.q_max:
            raise FilterDesignError(f"need 0 < q_min < q_max, got {self}")


@dataclass(frozen=True)
class BiquadCoeffs:
    """Normalized so a0 = 1."""

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float

    def poles(self) -> np.ndarray:
        return np.roots([1.0, self.a1, self.a2])


class Phase(enum.IntEnum):
    IDLE = 0
    ATTACK = 1
    SUSTAIN = 2
    RELEASE = 3


@dataclass
class AsrEnvelope:
    attack_s: float = 0.08
    release_s: float = 0.6
    phase: Phase = Phase.IDLE
    value: float = 0.0

    def __post_init__(self):
        if self.attack_s <= 0 or self.release_s <= 0:
            raise ValueError("attack_s and release_s must be > 0")


def envelope_step(env: AsrEnvelope, gate: bool, dt: float) -> AsrEnvelope:
    """Advance the envelope by dt seconds with the given gate; linear segments."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    value, phase = _env_step_scalar(
        env.value, int(env.phase), gate, dt, env.attack_s, env.release_s
    )
    env.value = value
    env.phase = Phase(phase)
    return env


def _env_step_scalar(value, phase, gate, dt, attack_s, release_s):
    if gate:
        if phase == Phase.IDLE or phase == Phase.RELEASE:
            phase = Phase.ATTACK
        if phase == Phase.ATTACK:
            value += dt / attack_s
            if value >= 1.0:
                value = 1.0
                phase = Phase.SUSTAIN
    else:
        if phase == Phase.ATTACK or phase == Phase.SUSTAIN:
            phase = Phase.RELEASE
        if phase == Phase.RELEASE:
            value -= dt / release_s
            if value <= 0.0:
                value = 0.0
                phase = Phase.IDLE
    return value, int(phase)


def q_of_envelope(env_value: float, qr: QRange) -> float:
    """Affine Q coupling: q_min at zero, q_max at full sustain."""
    return qr.q_min + (qr.q_max - qr.q_min) * env_value


def design_bandpass(f0: float, q: float, sample_rate: float) -> BiquadCoeffs:
    """Constant-peak-gain resonator: |H| = 1 at f0, -3 dB bandwidth ~ f0/Q."""
    if not 0 < f0 < sample_rate / 2:
        raise FilterDesignError(f"f0 {f0} Hz outside (0, {sample_rate / 2}) Hz")
    if q <= 0:
        raise FilterDesignError(f"Q must be > 0, got {q}")
    w0 = 2.0 * math.pi * f0 / sample_rate
    alpha = math.sin(w0) / (2.0 * q)
    inv = 1.0 / (1.0 + alpha)
    return BiquadCoeffs(
        b0=alpha * inv,
        b1=0.0,
        b2=-alpha * inv,
        a1=-2.0 * math.cos(w0) * inv,
        a2=(1.0 - alpha) * inv,
    )


def frequency_response(coeffs: BiquadCoeffs, freqs, sample_rate: float) -> np.ndarray:
    """Complex H(e^jw) at the given frequencies in Hz."""
    w = 2.0 * np.pi * np.asarray(freqs, dtype=np.float64) / sample_rate
    z1 = np.exp(-1j * w)
    z2 = z1 * z1
    return (coeffs.b0 + coeffs.b1 * z1 + coeffs.b2 * z2) / (1.0 + coeffs.a1 * z1 + coeffs.a2 * z2)


def partial_set(f0: float, sample_rate: float, partial_spec=DEFAULT_PARTIALS):
    """(freq, gain) pairs for the harmonics that fit under the cutoff."""
    if hasattr(partial_spec, "items"):
        pairs = sorted(partial_spec.items())
    else:
        pairs = sorted((int(n), float(g)) for n, g in partial_spec)
    out = []
    for n, gain in pairs:
        if n < 2:
            raise FilterDesignError(f"partial harmonic numbers start at 2, got {n}")
        freq = n * f0
        if freq < PARTIAL_FREQ_CUTOFF * sample_rate:
            out.append((freq, gain))
    return out


# --- voice ------------------------------------------------------------------

@dataclass
class NoteVoice:
    """One note's filter group, envelope, and gate state."""

    note_index: int
    f0: float
    sample_rate: float
    band_freqs: np.ndarray  # fundamental first, then partials
    band_gains: np.ndarray
    envelope: AsrEnvelope
    q_range: QRange = field(default_factory=QRange)
    velocity_gain: float = 1.0
    gate: bool = False

    def __post_init__(self):
        self.band_freqs = np.asarray(self.band_freqs, dtype=np.float64)
        self.band_gains = np.asarray(self.band_gains, dtype=np.float64)
        if np.any(self.band_freqs >= self.sample_rate / 2):
            raise FilterDesignError("band frequency at or above Nyquist")
        if np.any((self.band_gains <= 0) | (self.band_gains > 1)):
            raise FilterDesignError("band gains must lie in (0, 1]")
        if not 0 < self.velocity_gain <= 1:
            raise FilterDesignError("velocity_gain must lie in (0, 1]")
        self.z1 = np.zeros(len(self.band_freqs))
        self.z2 = np.zeros(len(self.band_freqs))

    @classmethod
    def create(cls, note_index: int, f0: float, sample_rate: float,
               partial_spec=DEFAULT_PARTIALS, attack_s: float = 0.08,
               release_s: float = 0.6, q_range: QRange = QRange()) -> "NoteVoice":
        partials = partial_set(f0, sample_rate, partial_spec)
        freqs = [f0] + [f for f, _ in partials]
        gains = [1.0] + [g for _, g in partials]
        return cls(
            note_index=note_index, f0=f0, sample_rate=sample_rate,
            band_freqs=np.array(freqs), band_gains=np.array(gains),
            envelope=AsrEnvelope(attack_s=attack_s, release_s=release_s),
            q_range=q_range,
        )

    def note_on(self, velocity_gain: float) -> None:
        if self.envelope.phase == Phase.IDLE:
            self.z1[:] = 0.0
            self.z2[:] = 0.0
        self.velocity_gain = velocity_gain
        self.gate = True

    def note_off(self) -> None:
        self.gate = False

    @property
    def idle(self) -> bool:
        return self.envelope.phase == Phase.IDLE and not self.gate


# The block kernel: per block, step the envelope, rebuild every band's
# coefficients at the envelope's Q, filter, and accumulate
# gain * envelope * velocity into `out`. Returns the updated envelope state.

def _voice_frame_py(x, out, freqs, gains, nbands, z1, z2, value, phase, gate,
                    velocity_gain, attack_s, release_s, q_min, q_max,
                    sample_rate, block_size):
    from scipy.signal import lfilter

    n = len(x)
    start = 0
    while start < n:
        m = min(block_size, n - start)
        value, phase = _env_step_scalar(value, phase, gate, m / sample_rate,
                                        attack_s, release_s)
        if phase == Phase.IDLE and not gate:
            z1[:nbands] = 0.0
            z2[:nbands] = 0.0
            break
        q = q_min + (q_max - q_min) * value
        amp = value * velocity_gain
        seg = x[start:start + m]
        for b in range(nbands):
            c = design_bandpass(freqs[b], q, sample_rate)
            y, zf = lfilter([c.b0, 0.0, c.b2], [1.0, c.a1, c.a2], seg,
                            zi=np.array([z1[b], z2[b]]))
            z1[b], z2[b] = zf
            out[start:start + m] += gains[b] * amp * y
        start += m
    return value, phase


if HAVE_NUMBA:

    @njit(cache=True)
    def _voice_frame_nb(x, out, freqs, gains, nbands, z1, z2, value, phase, gate,
                        velocity_gain, attack_s, release_s, q_min, q_max,
                        sample_rate, block_size):  # pragma: no cover - jitted
        n = x.shape[0]
        start = 0
        while start < n:
            m = block_size
            if start + m > n:
                m = n - start
            dt = m / sample_rate
            if gate:
                if phase == 0 or phase == 3:
                    phase = 1
                if phase == 1:
                    value += dt / attack_s
                    if value >= 1.0:
                        value = 1.0
                        phase = 2
            else:
                if phase == 1 or phase == 2:
                    phase = 3
                if phase == 3:
                    value -= dt / release_s
                    if value <= 0.0:
                        value = 0.0
                        phase = 0
            if phase == 0 and not gate:
                for b in range(nbands):
                    z1[b] = 0.0
                    z2[b] = 0.0
                break
            q = q_min + (q_max - q_min) * value
            amp = value * velocity_gain
            for b in range(nbands):
                w0 = 2.0 * np.pi * freqs[b] / sample_rate
                alpha = np.sin(w0) / (2.0 * q)
                inv = 1.0 / (1.0 + alpha)
                b0 = alpha * inv
                a1 = -2.0 * np.cos(w0) * inv
                a2 = (1.0 - alpha) * inv
                g = gains[b] * amp
                s1 = z1[b]
                s2 = z2[b]
                for k in range(start, start + m):
                    xx = x[k]
                    yy = b0 * xx + s1
                    s1 = s2 - a1 * yy
                    s2 = -b0 * xx - a2 * yy
                    out[k] += g * yy
                z1[b] = s1
                z2[b] = s2
            start += m
        return value, phase

    @njit(cache=True)
    def _gain_clip_nb(buf, gain):  # pragma: no cover - jitted
        clips = 0
        for k in range(buf.shape[0]):
            s = buf[k] * gain
            if s > 1.0:
                s = 1.0
                clips += 1
            elif s < -1.0:
                s = -1.0
                clips += 1
            buf[k] = s
        return clips

    _voice_frame = _voice_frame_nb
else:  # pragma: no cover
    _voice_frame = _voice_frame_py


def render_voice_into(voice: NoteVoice, x: np.ndarray, out: np.ndarray,
                      block_size: int) -> None:
    """Accumulate one voice's frame signal into `out`, updating voice state."""
    value, phase = _voice_frame(
        x, out, voice.band_freqs, voice.band_gains, len(voice.band_freqs),
        voice.z1, voice.z2, float(voice.envelope.value), int(voice.envelope.phase),
        voice.gate, voice.velocity_gain, voice.envelope.attack_s,
        voice.envelope.release_s, voice.q_range.q_min, voice.q_range.q_max,
        voice.sample_rate, block_size,
    )
    voice.envelope.value = value
    voice.envelope.phase = Phase(phase)


def voice_render(voice: NoteVoice, noise, block_size: int = 64) -> np.ndarray:
    """Render one voice over a noise segment; idle voices yield exact zeros."""
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    x = noise.samples if isinstance(noise, NoiseSegment) else np.asarray(noise, dtype=np.float64)
    out = np.zeros(len(x))
    if voice.idle:
        return out
    render_voice_into(voice, x, out, block_size)
    return out


def warmup_kernels() -> None:
    """Trigger JIT compilation so timed paths never pay it."""
    if not HAVE_NUMBA:
        return
    x = np.zeros(8)
    out = np.zeros(8)
    _voice_frame_nb(x, out, np.array([440.0]), np.array([1.0]), 1,
                    np.zeros(1), np.zeros(1), 0.5, 1, True, 1.0,
                    0.08, 0.6, 5.0, 1000.0, 48000.0, 4)
    _gain_clip_nb(out, 0.7)
