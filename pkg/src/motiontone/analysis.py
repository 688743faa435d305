"""Signal measurements used by tests, reports, and the benchmark.

Spectral flatness is computed on a Welch-averaged periodogram: a single
raw periodogram of true white noise already has flatness ~exp(-gamma) ~ 0.56
from chi-square bin scatter, so segment averaging is required before the
geometric/arithmetic ratio says anything about whiteness.
"""

from __future__ import annotations

import math

import numpy as np

from .resonator import BiquadCoeffs, frequency_response


def rms(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        return 0.0
    return float(np.sqrt(np.mean(x * x)))


def zero_crossings(x) -> int:
    """Count strict sign changes (zeros do not count as crossings)."""
    x = np.asarray(x, dtype=np.float64)
    return int(np.count_nonzero(x[1:] * x[:-1] < 0))


def spectral_flatness(x, nfft: int = 4096) -> float:
    """Geometric over arithmetic mean of the averaged nfft-point periodogram.

    Non-overlapping rectangular segments; DC and Nyquist bins excluded.
    Needs at least one full segment; several are needed for a stable value.
    """
    x = np.asarray(x, dtype=np.float64)
    k = len(x) // nfft
    if k < 1:
        raise ValueError(f"need at least {nfft} samples, got {len(x)}")
    segs = x[: k * nfft].reshape(k, nfft)
    psd = np.mean(np.abs(np.fft.rfft(segs, axis=1)) ** 2, axis=0)[1:-1]
    if np.any(psd <= 0):
        return 0.0
    return float(np.exp(np.mean(np.log(psd))) / np.mean(psd))


def band_energy_fraction(x, sample_rate: float, centers, half_width: float) -> float:
    """Fraction of total signal energy within +-half_width of each center.

    Brute-force route: full FFT, energy summed bin by bin over the bands,
    cross-checked against the time-domain total via Parseval.
    """
    x = np.asarray(x, dtype=np.float64)
    spectrum = np.fft.fft(x)
    power = np.abs(spectrum) ** 2 / len(x)
    total_time = float(np.sum(x * x))
    total_freq = float(np.sum(power))
    if not math.isclose(total_time, total_freq, rel_tol=1e-9, abs_tol=1e-12):
        raise AssertionError("Parseval check failed; FFT energy accounting is off")
    freqs = np.fft.fftfreq(len(x), d=1.0 / sample_rate)
    sel = np.zeros(len(x), dtype=bool)
    for c in centers:
        sel |= np.abs(np.abs(freqs) - c) <= half_width
    if total_freq == 0:
        return 0.0
    return float(np.sum(power[sel]) / total_freq)


def measure_bandwidth_3db(coeffs: BiquadCoeffs, f0: float, sample_rate: float) -> float:
    """-3 dB width around the peak, found by bisection on |H|."""
    target = abs(frequency_response(coeffs, [f0], sample_rate)[0]) / math.sqrt(2.0)

    def edge(direction: int) -> float:
        step = max(f0 * 1e-6, 1e-4)
        inner = f0
        outer = f0 + direction * step
        while 0 < outer < sample_rate / 2:
            if abs(frequency_response(coeffs, [outer], sample_rate)[0]) < target:
                break
            inner = outer
            step *= 2
            outer = f0 + direction * (outer - f0 + step)
        else:
            outer = f0 if direction < 0 else sample_rate / 2 - 1e-9
        for _ in range(80):
            mid = 0.5 * (inner + outer)
            if abs(frequency_response(coeffs, [mid], sample_rate)[0]) >= target:
                inner = mid
            else:
                outer = mid
        return 0.5 * (inner + outer)

    return edge(+1) - edge(-1)
