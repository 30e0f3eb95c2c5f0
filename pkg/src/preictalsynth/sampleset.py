"""Windowed sample collections and their on-disk form.

A SampleSet is the unit of exchange between the data pipeline, the
adversarial trainer, the synthesizer, and the prediction harness: a stack
of equally shaped windows with per-window class labels (preictal or
interictal) and provenance (real or synthetic). Sets are persisted as the
package's array-container format next to a JSON sidecar holding the
non-array metadata.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import read_checkpoint, write_checkpoint
from .errors import DataError

LABELS = ("preictal", "interictal")
PROVENANCES = ("real", "synthetic")


@dataclass
class SampleSet:
    windows: np.ndarray          # (n, channels, length) float64
    labels: tuple                # per window, in LABELS
    provenance: tuple            # per window, in PROVENANCES
    seizure: tuple               # per window: owning seizure index, -1 if none
    rate: float
    channels: tuple = ()         # channel names; empty means unnamed
    leading: tuple = ()          # seizure indices usable as CV folds
    latents: np.ndarray | None = None   # (n, zdim) for regenerable synthetics

    def __post_init__(self):
        w = np.asarray(self.windows, dtype=np.float64)
        object.__setattr__(self, "windows", w)
        if w.ndim != 3:
            raise DataError(f"windows must be (n, channels, length), got {w.shape}")
        n = w.shape[0]
        self.labels = tuple(self.labels)
        self.provenance = tuple(self.provenance)
        self.seizure = tuple(int(s) for s in self.seizure)
        self.channels = tuple(self.channels)
        self.leading = tuple(int(i) for i in self.leading)
        for name, seq in (("labels", self.labels), ("provenance", self.provenance),
                          ("seizure", self.seizure)):
            if len(seq) != n:
                raise DataError(f"{name} has {len(seq)} entries for {n} windows")
        bad = set(self.labels) - set(LABELS)
        if bad:
            raise DataError(f"unknown labels {sorted(bad)}")
        bad = set(self.provenance) - set(PROVENANCES)
        if bad:
            raise DataError(f"unknown provenance {sorted(bad)}")
        if self.rate <= 0:
            raise DataError(f"sample rate must be positive, got {self.rate}")
        if self.channels and len(self.channels) != w.shape[1]:
            raise DataError(f"{len(self.channels)} channel names for "
                            f"{w.shape[1]} channels")
        if self.latents is not None:
            z = np.asarray(self.latents, dtype=np.float64)
            object.__setattr__(self, "latents", z)
            if z.ndim != 2 or z.shape[0] != n:
                raise DataError(f"latents must be ({n}, zdim), got {z.shape}")

    @property
    def n(self) -> int:
        return self.windows.shape[0]

    @property
    def window_shape(self) -> tuple:
        return self.windows.shape[1:]

    def count(self, label: str) -> int:
        return sum(1 for l in self.labels if l == label)

    def select(self, index) -> "SampleSet":
        """New set holding the windows picked by a boolean mask or index array."""
        idx = np.asarray(index)
        if idx.dtype == bool:
            idx = np.nonzero(idx)[0]
        take = lambda seq: tuple(seq[i] for i in idx)
        return replace(self, windows=self.windows[idx],
                       labels=take(self.labels),
                       provenance=take(self.provenance),
                       seizure=take(self.seizure),
                       latents=None if self.latents is None else self.latents[idx])

    def channel_slice(self, k: int) -> "SampleSet":
        """Single-channel view as a 1-channel set (used for per-channel GANs)."""
        if not 0 <= k < self.windows.shape[1]:
            raise DataError(f"channel {k} out of range for "
                            f"{self.windows.shape[1]} channels")
        return replace(self, windows=self.windows[:, k:k + 1, :],
                       channels=(self.channels[k],) if self.channels else ())


def concat_sets(sets) -> SampleSet:
    sets = list(sets)
    if not sets:
        raise DataError("cannot concatenate zero sample sets")
    first = sets[0]
    for s in sets[1:]:
        if s.window_shape != first.window_shape:
            raise DataError(f"window shapes differ: {s.window_shape} vs "
                            f"{first.window_shape}")
        if s.rate != first.rate:
            raise DataError(f"sample rates differ: {s.rate} vs {first.rate}")
        if s.channels != first.channels:
            raise DataError("channel names differ between sets")
    lat = None
    if all(s.latents is not None for s in sets):
        lat = np.concatenate([s.latents for s in sets], axis=0)
    leading = tuple(sorted({i for s in sets for i in s.leading}))
    return SampleSet(
        windows=np.concatenate([s.windows for s in sets], axis=0),
        labels=sum((s.labels for s in sets), ()),
        provenance=sum((s.provenance for s in sets), ()),
        seizure=sum((s.seizure for s in sets), ()),
        rate=first.rate, channels=first.channels, leading=leading, latents=lat)


def _sidecar(path: str) -> str:
    base = path[:-4] if path.endswith(".pfg") else path
    return base + ".meta.json"


def save_sampleset(s: SampleSet, path: str) -> None:
    """Write arrays to `path` (container format) and metadata to the sidecar."""
    entries = [("windows", s.windows)]
    if s.latents is not None:
        entries.append(("latents", s.latents))
    write_checkpoint(entries, path)
    meta = {
        "labels": list(s.labels),
        "provenance": list(s.provenance),
        "seizure": list(s.seizure),
        "rate": s.rate,
        "channels": list(s.channels),
        "leading": list(s.leading),
    }
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh)
        fh.write("\n")


def load_sampleset(path: str) -> SampleSet:
    arrays = dict(read_checkpoint(path))
    if "windows" not in arrays:
        raise DataError(f"{path}: container holds no 'windows' entry")
    sidecar = _sidecar(path)
    if not os.path.exists(sidecar):
        raise DataError(f"missing sidecar {sidecar}")
    with open(sidecar) as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as e:
            raise DataError(f"{sidecar}: invalid JSON: {e}") from None
    try:
        return SampleSet(windows=arrays["windows"],
                         labels=meta["labels"],
                         provenance=meta["provenance"],
                         seizure=meta["seizure"],
                         rate=meta["rate"],
                         channels=meta.get("channels", ()),
                         leading=meta.get("leading", ()),
                         latents=arrays.get("latents"))
    except KeyError as e:
        raise DataError(f"{sidecar}: missing metadata key {e}") from None


def parse_manifest(text: str) -> dict:
    """Flat key=value dataset manifest.

    Blank lines and `#` comments are skipped. Repeated `record` keys
    (record.0, record.1, ...) collect into an ordered list under "records".
    """
    out: dict = {"records": []}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"manifest line {no}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise DataError(f"manifest line {no}: empty key")
        if key == "record" or key.startswith("record."):
            out["records"].append(value)
        else:
            out[key] = value
    return out


def write_manifest(entries: dict, records) -> str:
    lines = [f"{k} = {v}" for k, v in entries.items()]
    lines += [f"record.{i} = {p}" for i, p in enumerate(records)]
    return "\n".join(lines) + "\n"
