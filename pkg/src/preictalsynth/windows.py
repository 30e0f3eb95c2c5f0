"""Windowing, rate conversion, and amplitude normalization.

The harvest path cuts non-overlapping fixed-length windows out of the
preictal and interictal intervals of a labelled recording, then brings
them to the modelling rate (anti-aliasing low-pass followed by linear
interpolation onto the uniform target grid) and scales each channel
into [-1, 1].
"""

from __future__ import annotations

import numpy as np

from .annotations import PeriodMap
from .edf import EegRecord
from .errors import DataError
from .sampleset import SampleSet

HARVEST_LABELS = ("preictal", "interictal")
WINDOW_SECONDS = 20.0


def segment_windows(record: EegRecord, periods: PeriodMap,
                    window_seconds: float = WINDOW_SECONDS,
                    labels=HARVEST_LABELS) -> SampleSet:
    """Cut contiguous non-overlapping windows fully inside eligible intervals.

    Partial trailing windows are dropped; an empty result is legitimate.
    Each preictal window remembers which seizure owns its interval.
    """
    if window_seconds <= 0:
        raise DataError(f"window length must be positive, got {window_seconds}")
    rate = record.rate
    n_per = int(round(window_seconds * rate))
    if abs(n_per - window_seconds * rate) > 1e-9 or n_per <= 0:
        raise DataError(f"window of {window_seconds}s is not a whole number of "
                        f"samples at {rate} Hz")
    wins, labs, seiz = [], [], []
    total = record.samples.shape[1]
    for iv in periods.intervals:
        if iv.label not in labels:
            continue
        first = int(np.ceil(iv.start * rate - 1e-9))
        stop = min(int(np.floor(iv.end * rate + 1e-9)), total)
        for a in range(first, stop - n_per + 1, n_per):
            wins.append(record.samples[:, a:a + n_per])
            labs.append(iv.label)
            seiz.append(iv.seizure)
    if wins:
        windows = np.stack(wins)
    else:
        windows = np.empty((0, record.samples.shape[0], n_per))
    return SampleSet(windows=windows, labels=labs, provenance=["real"] * len(labs),
                     seizure=seiz, rate=rate, channels=record.channels,
                     leading=periods.leading)


def lowpass_taps(cutoff_hz: float, rate: float, n_taps: int = 63) -> np.ndarray:
    """Hamming-windowed sinc low-pass, unit DC gain."""
    if not 0 < cutoff_hz < rate / 2 + 1e-12:
        raise DataError(f"cutoff {cutoff_hz} Hz outside (0, {rate / 2}] at "
                        f"{rate} Hz")
    fc = cutoff_hz / rate
    n = np.arange(n_taps) - (n_taps - 1) / 2.0
    h = 2.0 * fc * np.sinc(2.0 * fc * n) * np.hamming(n_taps)
    return h / h.sum()


def resample(window: np.ndarray, from_rate: float, to_rate: float) -> np.ndarray:
    """Anti-aliased rate conversion onto the uniform to_rate grid.

    Low-pass at to_rate/2 (reflect-padded so edges keep their level), then
    linear interpolation at the new sample instants. Length maps
    n -> round(n * to_rate / from_rate).
    """
    if from_rate <= 0 or to_rate <= 0:
        raise DataError(f"rates must be positive, got {from_rate} -> {to_rate}")
    if to_rate >= from_rate:
        raise DataError(f"resample only reduces rate, got {from_rate} -> {to_rate}")
    x = np.asarray(window, dtype=np.float64)
    flat = x.reshape(-1, x.shape[-1])
    taps = lowpass_taps(to_rate / 2.0, from_rate)
    pad = len(taps) // 2
    # odd reflection continues each edge's level and slope, avoiding the
    # kink transient a plain mirror would add
    padded = np.pad(flat, ((0, 0), (pad, pad)), mode="reflect",
                    reflect_type="odd")
    smooth = np.empty_like(flat)
    for i in range(flat.shape[0]):
        smooth[i] = np.convolve(padded[i], taps, mode="valid")
    n_in = x.shape[-1]
    n_out = int(round(n_in * to_rate / from_rate))
    t_new = np.arange(n_out) / to_rate
    t_old = np.arange(n_in) / from_rate
    out = np.empty(flat.shape[:1] + (n_out,))
    for i in range(flat.shape[0]):
        out[i] = np.interp(t_new, t_old, smooth[i])
    return out.reshape(x.shape[:-1] + (n_out,))


def normalize_amplitude(window: np.ndarray) -> np.ndarray:
    """Affine map of each channel's [min, max] onto [-1, 1].

    A constant channel carries no shape information and maps to zeros.
    Already full-range channels pass through unchanged.
    """
    x = np.asarray(window, dtype=np.float64)
    mn = x.min(axis=-1, keepdims=True)
    mx = x.max(axis=-1, keepdims=True)
    span = mx - mn
    flat = span == 0
    safe = np.where(flat, 1.0, span)
    out = 2.0 * (x - mn) / safe - 1.0
    return np.where(flat, 0.0, out)
