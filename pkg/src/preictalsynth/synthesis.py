"""Multichannel assembly from per-channel generators.

Each channel has its own trained generator, but one latent vector is shared
across all of them per synthetic sample, which is what ties the channels of
a window together. Pools store their latents so any stored window can be
re-derived exactly from its latent.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .models import load_model, save_model
from .sampleset import SampleSet
from .tensor import no_grad

ORIGINAL_RATE = 256.0
MODEL_RATE = 100.0
WINDOW_SECONDS = 20.0


class GeneratorBank:
    """Ordered per-channel generators sharing one latent-space definition."""

    def __init__(self, generators, channels=()):
        self.generators = list(generators)
        if not self.generators:
            raise DataError("generator bank cannot be empty")
        self.channels = tuple(channels) if channels else tuple(
            f"ch{i}" for i in range(len(self.generators)))
        if len(self.channels) != len(self.generators):
            raise DataError(f"{len(self.channels)} labels for "
                            f"{len(self.generators)} generators")
        first = self.generators[0].spec
        for g in self.generators:
            if g.spec.role != "generator":
                raise ConfigError(f"bank accepts generators only, got {g.spec.role}")
            if (g.spec.latent, g.spec.out_length) != (first.latent, first.out_length):
                raise DataError("bank generators disagree on latent/output shape")
        self.latent = first.latent
        self.out_length = first.out_length

    def __len__(self) -> int:
        return len(self.generators)


def synthesize_multichannel(bank: GeneratorBank, z: np.ndarray) -> np.ndarray:
    """One synthetic window: row k is channel k's generator applied to the
    single shared latent."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape != (bank.latent,):
        raise ShapeError(f"latent must have length {bank.latent}, got {z.shape}")
    rows = np.empty((len(bank), bank.out_length))
    with no_grad():
        for k, g in enumerate(bank.generators):
            rows[k] = g.forward(z).data.reshape(-1)
    return rows


def upsample_to_original(sample: np.ndarray,
                         window_seconds: float = WINDOW_SECONDS,
                         to_rate: float = ORIGINAL_RATE) -> np.ndarray:
    """Linear interpolation from the modelling grid back to the full-rate
    grid (2000 -> 5120 samples for the 20 s window)."""
    x = np.asarray(sample, dtype=np.float64)
    n_in = x.shape[-1]
    from_rate = n_in / window_seconds
    n_out = int(round(window_seconds * to_rate))
    if n_in < 2:
        raise DataError(f"cannot upsample length-{n_in} input")
    t_new = np.arange(n_out) / to_rate
    t_old = np.arange(n_in) / from_rate
    flat = x.reshape(-1, n_in)
    out = np.empty(flat.shape[:1] + (n_out,))
    # the target grid extends a fraction of a source step past the last
    # source sample; continue the final segment's slope there instead of
    # holding flat, but never leave the channel's own value range
    tail = t_new > t_old[-1]
    for i in range(flat.shape[0]):
        row = np.interp(t_new, t_old, flat[i])
        if tail.any():
            slope = (flat[i, -1] - flat[i, -2]) * from_rate
            row[tail] = flat[i, -1] + slope * (t_new[tail] - t_old[-1])
            np.clip(row, flat[i].min(), flat[i].max(), out=row)
        out[i] = row
    return out.reshape(x.shape[:-1] + (n_out,))


def pool_latents(n: int, latent: int, seed) -> np.ndarray:
    """The i-th pooled latent depends only on (seed, i), so pools can be
    grown or partitioned across workers without changing earlier samples."""
    out = np.empty((n, latent))
    for i in range(n):
        out[i] = np.random.default_rng(
            np.random.SeedSequence((_seed_entropy(seed), i))).standard_normal(latent)
    return out


def _seed_entropy(seed) -> int:
    return int(seed) & 0xFFFFFFFFFFFFFFFF


def generate_pool(bank: GeneratorBank, n: int, seed,
                  rate: float = MODEL_RATE) -> SampleSet:
    """n synthetic multichannel windows from n independent latents."""
    if n < 1:
        raise DataError(f"pool size must be >= 1, got {n}")
    zs = pool_latents(n, bank.latent, seed)
    windows = np.empty((n, len(bank), bank.out_length))
    for i in range(n):
        windows[i] = synthesize_multichannel(bank, zs[i])
    return SampleSet(windows=windows,
                     labels=["preictal"] * n,
                     provenance=["synthetic"] * n,
                     seizure=[-1] * n,
                     rate=rate,
                     channels=bank.channels,
                     latents=zs)


_INDEX = "index.tsv"


def save_bank(bank: GeneratorBank, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    lines = []
    for k, (label, g) in enumerate(zip(bank.channels, bank.generators)):
        fname = f"channel{k:02d}.model"
        save_model(g, os.path.join(directory, fname))
        lines.append(f"{k}\t{label}\t{fname}")
    with open(os.path.join(directory, _INDEX), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_bank(directory: str) -> GeneratorBank:
    index = os.path.join(directory, _INDEX)
    if not os.path.exists(index):
        raise DataError(f"no bank index at {index}")
    generators, channels = [], []
    with open(index) as fh:
        for no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{index} line {no}: expected 3 tab-separated "
                                f"fields, got {len(parts)}")
            _, label, fname = parts
            channels.append(label)
            generators.append(load_model(os.path.join(directory, fname)))
    return GeneratorBank(generators, channels)
