"""Distribution metrics for synthetic sample quality.

Three views of how closely a synthetic pool matches real data:

* fdrmse: RMSE between the DFT magnitude spectra of paired windows,
  averaged over many random pairings. Phase-free, so time alignment
  between windows does not matter.
* fid: Frechet distance between Gaussian fits of embedding vectors,
  where embeddings come from the 64-wide penultimate layer of a
  preictal-vs-interictal classifier trained on real data.
* wasserstein_1d: per-pairing 1-D optimal transport between the two
  windows' value distributions (mean absolute difference of sorted
  values), averaged over pairings.

The scorecard evaluates each synthetic pool plus two controls: "real"
(two disjoint real halves against each other, the noise floor of each
metric) and "noise" (matched-variance white noise, the sanity ceiling).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .models import ModelSpec, build_model
from .params import AdamState, adam_step
from .sampleset import SampleSet
from .tensor import (Tensor, add, backward, clamp, log, mean_all, mul, neg,
                     no_grad, sub)

SHRINKAGE = 1e-6
EIG_FLOOR = 1e-10


def _check_single_channel(s: SampleSet, what: str):
    if s.n == 0:
        raise DataError(f"{what} is empty")
    if s.windows.shape[1] != 1:
        raise DataError(f"{what} must be single-channel, got "
                        f"{s.windows.shape[1]} channels")


def _check_pairable(a: SampleSet, b: SampleSet):
    _check_single_channel(a, "first set")
    _check_single_channel(b, "second set")
    if a.windows.shape[2] != b.windows.shape[2]:
        raise DataError(f"window lengths differ: {a.windows.shape[2]} vs "
                        f"{b.windows.shape[2]}")


def _pairings(na: int, nb: int, pairs: int, seed) -> list:
    """Random bijective pairing: k distinct windows from each side."""
    rng = np.random.default_rng(seed)
    k = min(pairs, na, nb)
    ia = rng.choice(na, size=k, replace=False)
    ib = rng.choice(nb, size=k, replace=False)
    return list(zip(ia.tolist(), ib.tolist()))


def magnitude_spectra(windows: np.ndarray) -> np.ndarray:
    """|DFT| per window over the non-redundant bins 0..N/2."""
    return np.abs(np.fft.rfft(windows[:, 0, :], axis=-1))


def fdrmse(set_a: SampleSet, set_b: SampleSet, pairs: int = 100, seed=0,
           pairing=None) -> float:
    """Mean over pairings of the RMSE between magnitude spectra."""
    _check_pairable(set_a, set_b)
    if pairing is None:
        pairing = _pairings(set_a.n, set_b.n, pairs, seed)
    mag_a = magnitude_spectra(set_a.windows)
    mag_b = magnitude_spectra(set_b.windows)
    scores = [float(np.sqrt(np.mean((mag_a[i] - mag_b[j]) ** 2)))
              for i, j in pairing]
    return float(np.mean(scores))


def wasserstein_1d(set_a: SampleSet, set_b: SampleSet, pairs: int = 100, seed=0,
                   pairing=None) -> float:
    """Mean over pairings of the 1-D transport cost between value
    distributions; for equal-length windows that is the mean absolute
    difference of sorted values."""
    _check_pairable(set_a, set_b)
    if pairing is None:
        pairing = _pairings(set_a.n, set_b.n, pairs, seed)
    sa = np.sort(set_a.windows[:, 0, :], axis=-1)
    sb = np.sort(set_b.windows[:, 0, :], axis=-1)
    scores = [float(np.mean(np.abs(sa[i] - sb[j]))) for i, j in pairing]
    return float(np.mean(scores))


def bce_loss(scores: Tensor, targets: np.ndarray) -> Tensor:
    """Binary cross-entropy over sigmoid scores, clamped away from log(0)."""
    y = np.asarray(targets, dtype=np.float64).reshape(scores.shape)
    if np.any((y != 0.0) & (y != 1.0)):
        raise DataError("targets must be 0 or 1")
    yt = Tensor(y)
    one_minus = Tensor(1.0 - y)
    pos = mul(log(clamp(scores, 1e-7, 1.0)), yt)
    neg_part = mul(log(clamp(sub(Tensor(np.ones(scores.shape)), scores),
                             1e-7, 1.0)), one_minus)
    return neg(mean_all(add(pos, neg_part)))


class Embedder:
    """Preictal-vs-interictal classifier whose penultimate layer is the
    embedding map. Must be trained before use."""

    def __init__(self, out_length: int = 2000, embed_size: int = 64,
                 disc_widths=(32, 64, 128, 256), seed=0,
                 spec: ModelSpec | None = None):
        if spec is None:
            spec = ModelSpec(family="cnn", role="discriminator", mode="gan",
                             out_length=out_length, embed_size=embed_size,
                             disc_widths=tuple(disc_widths))
        if spec.role != "discriminator" or spec.mode != "gan":
            raise ConfigError("embedder needs a sigmoid discriminator topology")
        self.spec = spec
        self.model = build_model(spec, np.random.default_rng(seed))
        self.trained = False

    @property
    def dim(self) -> int:
        return self.spec.embed_size

    def train(self, preictal: SampleSet, interictal: SampleSet,
              epochs: int = 60, batch: int = 16, lr: float = 1e-3,
              seed=0) -> list:
        """Balanced-batch binary training; returns the per-epoch losses."""
        _check_single_channel(preictal, "preictal set")
        _check_single_channel(interictal, "interictal set")
        rng = np.random.default_rng(seed)
        half = max(1, batch // 2)
        state = AdamState(lr=lr)
        losses = []
        for _ in range(epochs):
            ip = rng.choice(preictal.n, size=min(half, preictal.n), replace=False)
            ii = rng.choice(interictal.n, size=min(half, interictal.n),
                            replace=False)
            x = np.concatenate([preictal.windows[ip], interictal.windows[ii]])
            y = np.concatenate([np.ones(len(ip)), np.zeros(len(ii))])
            scores = self.model.forward(x)
            loss = bce_loss(scores, y.reshape(-1, 1))
            self.model.params.zero_grad()
            backward(loss, params=self.model.params)
            adam_step(self.model.params, state)
            losses.append(loss.item())
        self.trained = True
        return losses

    def embed_windows(self, windows: np.ndarray) -> np.ndarray:
        if not self.trained:
            raise ConfigError("embedder must be trained before embedding")
        with no_grad():
            return self.model.embed(Tensor(windows)).data.copy()


@dataclass
class EmbeddingSet:
    vectors: np.ndarray
    source: str
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def from_vectors(cls, vectors: np.ndarray, source: str = "unknown",
                     shrink: float = SHRINKAGE) -> "EmbeddingSet":
        v = np.asarray(vectors, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] == 0:
            raise DataError(f"embedding vectors must be (n, d) with n >= 1, "
                            f"got {v.shape}")
        mean = v.mean(axis=0)
        d = v.shape[1]
        if v.shape[0] == 1:
            cov = np.zeros((d, d))
        else:
            cov = np.cov(v, rowvar=False, ddof=1).reshape(d, d)
        cov = cov + shrink * np.eye(d)
        return cls(vectors=v, source=source, mean=mean, cov=cov)


def embed(samples: SampleSet, embedder: Embedder,
          source: str | None = None) -> EmbeddingSet:
    _check_single_channel(samples, "sample set")
    vectors = embedder.embed_windows(samples.windows)
    tag = source if source is not None else samples.provenance[0]
    return EmbeddingSet.from_vectors(vectors, source=tag)


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.where(vals < EIG_FLOOR, 0.0, vals)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(a: EmbeddingSet, b: EmbeddingSet) -> float:
    """Frechet distance between the Gaussian fits of two embedding sets."""
    if a.mean.shape != b.mean.shape:
        raise DataError(f"embedding dimensions differ: {a.mean.shape[0]} vs "
                        f"{b.mean.shape[0]}")
    diff = a.mean - b.mean
    root_a = _sqrtm_psd(a.cov)
    inner = root_a @ b.cov @ root_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    vals = np.where(vals < EIG_FLOOR, 0.0, vals)
    trace_term = float(np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.sqrt(vals).sum())
    return max(0.0, float(diff @ diff) + trace_term)


@dataclass
class Scorecard:
    rows: list            # (name, fdrmse, fid, wd, n)
    seed: int

    def to_csv(self) -> str:
        lines = ["row,fdrmse,fid,wd,n,seed"]
        for name, f, d, w, n in self.rows:
            lines.append(f"{name},{f:.10g},{d:.10g},{w:.10g},{n},{self.seed}")
        return "\n".join(lines) + "\n"

    def row(self, name: str) -> tuple:
        for r in self.rows:
            if r[0] == name:
                return r
        raise KeyError(name)


def _row_seed(seed, tag: str) -> np.random.SeedSequence:
    return np.random.SeedSequence((int(seed) & 0xFFFFFFFF, hash_tag(tag)))


def hash_tag(tag: str) -> int:
    """Stable small integer for a row name (python's hash is salted)."""
    h = 0
    for ch in tag:
        h = (h * 131 + ord(ch)) % 2_147_483_647
    return h


def scorecard(models, real: SampleSet, embedder: Embedder, seed=0,
              pairs: int = 100) -> Scorecard:
    """Metric rows for each named pool plus the two control rows."""
    _check_single_channel(real, "real set")
    if real.n < 4:
        raise DataError("real set too small to split into control halves")
    models = list(models)
    real_emb = embed(real, embedder, source="real")
    rows = []
    for name, pool in models:
        ss = _row_seed(seed, name)
        k = min(pairs, pool.n, real.n)
        rows.append((name,
                     fdrmse(pool, real, pairs, seed=ss.spawn(1)[0]),
                     fid(embed(pool, embedder, source=name), real_emb),
                     wasserstein_1d(pool, real, pairs, seed=ss.spawn(1)[0]),
                     k))

    split_rng = np.random.default_rng(_row_seed(seed, "real"))
    perm = split_rng.permutation(real.n)
    half_a = real.select(perm[: real.n // 2])
    half_b = real.select(perm[real.n // 2:])
    ss = _row_seed(seed, "real")
    k = min(pairs, half_a.n, half_b.n)
    rows.append(("real",
                 fdrmse(half_a, half_b, pairs, seed=ss.spawn(1)[0]),
                 fid(embed(half_a, embedder, source="real"),
                     embed(half_b, embedder, source="real")),
                 wasserstein_1d(half_a, half_b, pairs, seed=ss.spawn(1)[0]),
                 k))

    noise_rng = np.random.default_rng(_row_seed(seed, "noise"))
    noise = SampleSet(
        windows=noise_rng.normal(0.0, real.windows.std(),
                                 size=real.windows.shape),
        labels=list(real.labels), provenance=["synthetic"] * real.n,
        seizure=[-1] * real.n, rate=real.rate)
    ss = _row_seed(seed, "noise")
    k = min(pairs, noise.n, real.n)
    rows.append(("noise",
                 fdrmse(noise, real, pairs, seed=ss.spawn(1)[0]),
                 fid(embed(noise, embedder, source="noise"), real_emb),
                 wasserstein_1d(noise, real, pairs, seed=ss.spawn(1)[0]),
                 k))
    return Scorecard(rows=rows, seed=int(seed))
