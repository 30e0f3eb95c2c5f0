"""Synthetic stand-ins for clinical EEG.

Real scalp recordings cannot ship with the repository, so desk-scale
checks run on constructed signal families instead:

* two_sine_windows: a stochastic single-channel family (two sinusoids
  with random amplitudes and phases plus noise) that a small generative
  model can plausibly learn.
* make_surrogate_dataset / oracle_pool: a linearly separable two-class
  window set for the prediction harness. Class supports are disjoint by
  construction (opposite DC offsets larger than any oscillation), so the
  sign of a window's mean is a perfect reference classifier.
* make_demo_recording: a full multi-hour two-channel recording with
  annotated seizures, written as EDF plus a summary file, for exercising
  the pipeline end to end.
"""

from __future__ import annotations

import numpy as np

from .edf import write_edf
from .errors import ConfigError
from .sampleset import SampleSet

TWO_SINE_FREQS = (4.0, 9.0)
TWO_SINE_AMPS = ((0.40, 0.50), (0.22, 0.32))

# Surrogate classification family: oscillation budget (0.28) plus noise
# tails stays inside the 0.35 class offset, keeping the supports disjoint.
SURROGATE_FREQS = (0.4, 0.9)
SURROGATE_AMPS = ((0.12, 0.18), (0.06, 0.10))
SURROGATE_NOISE = 0.01
SEPARATION = 0.35


def _sine_stack(rng, n, channels, length, rate, freqs, amp_ranges, noise,
                dc) -> np.ndarray:
    t = np.arange(length) / rate
    out = np.empty((n, channels, length))
    for i in range(n):
        for c in range(channels):
            row = np.full(length, float(dc))
            for f, (lo, hi) in zip(freqs, amp_ranges):
                row += rng.uniform(lo, hi) * np.sin(
                    2.0 * np.pi * f * t + rng.uniform(0.0, 2.0 * np.pi))
            if noise:
                row += noise * rng.standard_normal(length)
            out[i, c] = row
    return np.clip(out, -1.0, 1.0)


def two_sine_windows(n: int, seed=0, length: int = 2000, rate: float = 100.0,
                     freqs=TWO_SINE_FREQS, amps=TWO_SINE_AMPS,
                     noise: float = 0.02, dc: float = 0.0,
                     label: str = "preictal",
                     provenance: str = "real") -> SampleSet:
    """Single-channel stochastic windows for generative-model checks."""
    if n < 1:
        raise ConfigError(f"need at least one window, got {n}")
    rng = np.random.default_rng(seed)
    w = _sine_stack(rng, n, 1, length, rate, freqs, amps, noise, dc)
    return SampleSet(windows=w, labels=[label] * n, provenance=[provenance] * n,
                     seizure=[-1] * n, rate=rate)


def noise_like(samples: SampleSet, n: int | None = None, seed=0) -> SampleSet:
    """White noise with the reference set's overall standard deviation."""
    if n is None:
        n = samples.n
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, samples.windows.std(),
                   size=(n,) + samples.window_shape)
    return SampleSet(windows=w, labels=[samples.labels[0]] * n,
                     provenance=["synthetic"] * n, seizure=[-1] * n,
                     rate=samples.rate, channels=samples.channels)


def make_surrogate_dataset(n_seizures: int = 3, windows_per_seizure: int = 20,
                           interictal_windows: int | None = None,
                           channels: int = 2, length: int = 256,
                           seed=0) -> SampleSet:
    """Separable preictal/interictal window set with per-seizure ownership.

    Every seizure is flagged leading, so the set supports one CV fold per
    seizure. interictal_windows defaults to the preictal count (balanced);
    augmentation experiments need more and should say so.
    """
    if n_seizures < 1 or windows_per_seizure < 1:
        raise ConfigError("need at least one seizure and one window each")
    n_pre = n_seizures * windows_per_seizure
    if interictal_windows is None:
        interictal_windows = n_pre
    rate = length / 20.0
    rng = np.random.default_rng(seed)
    pre = _sine_stack(rng, n_pre, channels, length, rate, SURROGATE_FREQS,
                      SURROGATE_AMPS, SURROGATE_NOISE, +SEPARATION)
    inter = _sine_stack(rng, interictal_windows, channels, length, rate,
                        SURROGATE_FREQS, SURROGATE_AMPS, SURROGATE_NOISE,
                        -SEPARATION)
    windows = np.concatenate([pre, inter])
    labels = ["preictal"] * n_pre + ["interictal"] * interictal_windows
    seizure = [i // windows_per_seizure for i in range(n_pre)] \
        + [-1] * interictal_windows
    return SampleSet(windows=windows, labels=labels,
                     provenance=["real"] * len(labels), seizure=seizure,
                     rate=rate, leading=tuple(range(n_seizures)))


def oracle_pool(reference: SampleSet, n: int, seed=0) -> SampleSet:
    """Synthetic preictal pool drawn from the true surrogate distribution.

    A best-case generative model: samples are new draws from exactly the
    process that produced the reference preictal class.
    """
    if n < 1:
        raise ConfigError(f"need at least one pool window, got {n}")
    c, length = reference.window_shape
    rng = np.random.default_rng(seed)
    w = _sine_stack(rng, n, c, length, reference.rate, SURROGATE_FREQS,
                    SURROGATE_AMPS, SURROGATE_NOISE, +SEPARATION)
    return SampleSet(windows=w, labels=["preictal"] * n,
                     provenance=["synthetic"] * n, seizure=[-1] * n,
                     rate=reference.rate, channels=reference.channels)


DEMO_RATE = 256.0
DEMO_DURATION = 10600.0
DEMO_ONSETS = (2400.0, 5800.0, 9200.0)
DEMO_SEIZURE_SECONDS = 40.0
DEMO_CHANNELS = ("T1-REF", "T2-REF")
DEMO_LEADING_GAP = 3000.0
DEMO_FILE = "demo_01.edf"

# Microvolt-scale pieces of the fabricated recording. The brain state is
# coded in the dominant oscillation frequency (slow wave before each
# onset, faster wave elsewhere), so harvested windows stay classifiable
# after per-window amplitude normalization, which would erase any offset.
DEMO_PRE_FREQ = 1.5       # Hz, dominant during the pre-onset span
DEMO_INTER_FREQ = 4.5     # Hz, dominant everywhere else
_DEMO_PRE_UV = 35.0
_DEMO_INTER_UV = 28.0
_DEMO_NOISE_UV = 3.0
_DEMO_ICTAL_UV = 80.0
_DEMO_PHYS_UV = 200.0
_DEMO_PRE_SPAN = 900.0     # dominant frequency flips this long before onset


def make_demo_recording(seed=0) -> tuple:
    """Fabricated two-channel EDF recording plus its seizure summary text.

    Returns (edf_bytes, summary_text). Onsets are spaced so that a
    leading-gap threshold of DEMO_LEADING_GAP seconds marks every
    seizure as leading. The frequency switch lands exactly on period
    boundaries, so no harvested window straddles a waveform splice.
    """
    rng = np.random.default_rng(seed)
    n = int(DEMO_DURATION * DEMO_RATE)
    t = np.arange(n) / DEMO_RATE

    pre = np.zeros(n, dtype=bool)
    ictal = np.zeros(n, dtype=bool)
    for on in DEMO_ONSETS:
        pre |= (t >= on - _DEMO_PRE_SPAN) & (t < on)
        ictal |= (t >= on) & (t <= on + DEMO_SEIZURE_SECONDS)

    samples = np.empty((len(DEMO_CHANNELS), n))
    for c in range(len(DEMO_CHANNELS)):
        slow = _DEMO_PRE_UV * np.sin(
            2.0 * np.pi * DEMO_PRE_FREQ * t + rng.uniform(0, 2 * np.pi))
        fast = _DEMO_INTER_UV * np.sin(
            2.0 * np.pi * DEMO_INTER_FREQ * t + rng.uniform(0, 2 * np.pi))
        row = np.where(pre, slow, fast)
        row += _DEMO_ICTAL_UV * ictal * np.sin(2.0 * np.pi * 3.0 * t)
        row += _DEMO_NOISE_UV * rng.standard_normal(n)
        samples[c] = row

    edf = write_edf(samples, DEMO_RATE, list(DEMO_CHANNELS),
                    phys_range=(-_DEMO_PHYS_UV, _DEMO_PHYS_UV),
                    patient="demo", recording="surrogate")

    lines = [f"File Name: {DEMO_FILE}",
             f"Number of Seizures in File: {len(DEMO_ONSETS)}"]
    for k, on in enumerate(DEMO_ONSETS, start=1):
        lines.append(f"Seizure {k} Start Time: {int(on)} seconds")
        lines.append(f"Seizure {k} End Time: "
                     f"{int(on + DEMO_SEIZURE_SECONDS)} seconds")
    return edf, "\n".join(lines) + "\n"
