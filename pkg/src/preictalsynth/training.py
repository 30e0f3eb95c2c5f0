"""Adversarial training loop and losses.

Two objectives share one schedule. In "gan" mode the discriminator
minimizes -mean(log D(x)) - mean(log(1 - D(x~))) over sigmoid scores and
the generator minimizes the non-saturating -mean(log D(x~)). In "wgan"
mode the critic minimizes -(mean D(x) - mean D(x~)) over linear scores,
its weights are clipped into [-c, c] after every update, and the
generator minimizes -mean(D(x~)).

An epoch is one scheduling unit: n_d critic updates on freshly sampled
batches, then one generator update. Any non-finite value during an epoch
aborts with the epoch index, which is the divergence signal.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, ShapeError, TrainingDiverged
from .models import ModelSpec, build_model
from .params import AdamState, adam_step, clip_weights
from .sampleset import SampleSet
from .synthesis import GeneratorBank
from .tensor import (
    Tensor,
    backward,
    clamp,
    log,
    mean_all,
    neg,
    no_grad,
    slice_axis,
    sub,
)

LOG_FLOOR = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    """Schedule and optimizer settings. Defaults are full scale; pass
    desk-scale values for anything interactive."""

    mode: str = "gan"
    clip: float = 0.01
    batch: int = 32
    critic_steps: int = 0          # 0 = by mode: 1 for gan, 5 for wgan
    epochs: int = 30000
    lr: float = 1e-5
    seed: int = 0
    family: str = "cnn"
    snapshot_every: int = 0        # metric snapshots into the trace; 0 = off

    def __post_init__(self):
        if self.mode not in ("gan", "wgan"):
            raise ConfigError(f"mode must be gan or wgan, got {self.mode!r}")
        if self.clip <= 0:
            raise ConfigError(f"clip must be positive, got {self.clip}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.critic_steps < 0:
            raise ConfigError(f"critic_steps must be >= 0, got {self.critic_steps}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")

    @property
    def n_critic(self) -> int:
        if self.critic_steps:
            return self.critic_steps
        return 5 if self.mode == "wgan" else 1


@dataclass
class TrainTrace:
    epochs: list = field(default_factory=list)
    d_loss: list = field(default_factory=list)
    g_loss: list = field(default_factory=list)
    wd: list = field(default_factory=list)      # None where not snapshotted
    d_updates: int = 0
    g_updates: int = 0

    def append(self, epoch, d_loss, g_loss, wd=None):
        self.epochs.append(epoch)
        self.d_loss.append(float(d_loss))
        self.g_loss.append(float(g_loss))
        self.wd.append(None if wd is None else float(wd))

    def to_csv(self) -> str:
        lines = ["epoch,d_loss,g_loss,wd"]
        for e, d, g, w in zip(self.epochs, self.d_loss, self.g_loss, self.wd):
            lines.append(f"{e},{d:.10g},{g:.10g},{'' if w is None else f'{w:.10g}'}")
        return "\n".join(lines) + "\n"


def _check_gan_scores(*scores):
    # sigmoid outputs can round to exactly 0 or 1, so the boundary passes;
    # anything beyond it cannot have come from a sigmoid
    for s in scores:
        if np.any(s.data < 0.0) or np.any(s.data > 1.0):
            raise DataError("gan-mode scores must lie in [0, 1]; "
                            "did the discriminator skip its sigmoid?")


def _mean_log(t: Tensor) -> Tensor:
    return mean_all(log(clamp(t, LOG_FLOOR, 1.0)))


def critic_loss(mode: str, scores_real: Tensor, scores_fake: Tensor) -> Tensor:
    if scores_real.shape != scores_fake.shape:
        raise DataError(f"score batches differ: {scores_real.shape} vs "
                        f"{scores_fake.shape}")
    if mode == "gan":
        _check_gan_scores(scores_real, scores_fake)
        ones = Tensor(np.ones(scores_fake.shape))
        return sub(neg(_mean_log(scores_real)),
                   _mean_log(sub(ones, scores_fake)))
    if mode == "wgan":
        return neg(sub(mean_all(scores_real), mean_all(scores_fake)))
    raise ConfigError(f"unknown mode {mode!r}")


def generator_loss(mode: str, scores_fake: Tensor) -> Tensor:
    if mode == "gan":
        _check_gan_scores(scores_fake)
        return neg(_mean_log(scores_fake))
    if mode == "wgan":
        return neg(mean_all(scores_fake))
    raise ConfigError(f"unknown mode {mode!r}")


@dataclass
class TrainResult:
    generator: object
    discriminator: object
    trace: TrainTrace


def default_specs(cfg: TrainConfig, out_length: int,
                  gen_spec: ModelSpec | None = None,
                  disc_spec: ModelSpec | None = None) -> tuple:
    if gen_spec is None:
        gen_spec = ModelSpec(family=cfg.family, role="generator", mode=cfg.mode,
                             out_length=out_length)
    if disc_spec is None:
        disc_spec = ModelSpec(family=cfg.family, role="discriminator",
                              mode=cfg.mode, out_length=out_length)
    if gen_spec.mode != cfg.mode or disc_spec.mode != cfg.mode:
        raise ConfigError("model specs disagree with the training mode")
    return gen_spec, disc_spec


def train_channel(real: SampleSet, cfg: TrainConfig,
                  gen_spec: ModelSpec | None = None,
                  disc_spec: ModelSpec | None = None,
                  generator=None, discriminator=None,
                  snapshot_fn=None) -> TrainResult:
    """Adversarially train one single-channel generator.

    Determinism: (cfg.seed, cfg, real) fixes initialization and every batch
    draw, hence the returned parameters.
    """
    x = real.windows
    n, channels, length = x.shape
    if channels != 1:
        raise DataError(f"train_channel expects single-channel windows, got "
                        f"{channels} channels")
    if n < cfg.batch:
        raise DataError(f"{n} real windows cannot fill a batch of {cfg.batch}")
    lo, hi = x.min(), x.max()
    if lo < -1.0 - 1e-9 or hi > 1.0 + 1e-9:
        raise DataError(f"training windows must lie in [-1, 1], found "
                        f"[{lo:g}, {hi:g}]")

    seq = np.random.SeedSequence(cfg.seed)
    g_seed, d_seed, loop_seed = seq.spawn(3)
    gen_spec, disc_spec = default_specs(cfg, length, gen_spec, disc_spec)
    g = generator or build_model(gen_spec, np.random.default_rng(g_seed))
    d = discriminator or build_model(disc_spec, np.random.default_rng(d_seed))
    rng = np.random.default_rng(loop_seed)

    g_state = AdamState(lr=cfg.lr)
    d_state = AdamState(lr=cfg.lr)
    trace = TrainTrace()
    m = cfg.batch
    latent = g.spec.latent

    for epoch in range(cfg.epochs):
        try:
            d_l = g_l = float("nan")
            for _ in range(cfg.n_critic):
                idx = rng.choice(n, size=m, replace=False)
                z = rng.standard_normal((m, latent))
                with no_grad():
                    fake = g.forward(z).data
                both = np.concatenate([x[idx], fake], axis=0)
                scores = d.forward(both)
                s_real = slice_axis(scores, 0, 0, m)
                s_fake = slice_axis(scores, 0, m, 2 * m)
                loss = critic_loss(cfg.mode, s_real, s_fake)
                d.params.zero_grad()
                backward(loss, params=d.params)
                adam_step(d.params, d_state)
                if cfg.mode == "wgan":
                    clip_weights(d.params, cfg.clip)
                trace.d_updates += 1
                d_l = loss.item()
            z = rng.standard_normal((m, latent))
            s_fake = d.forward(g.forward(z))
            loss = generator_loss(cfg.mode, s_fake)
            g.params.zero_grad()
            d.params.zero_grad()
            backward(loss, params=g.params)
            adam_step(g.params, g_state)
            trace.g_updates += 1
            g_l = loss.item()
        except ValueError as e:
            if isinstance(e, ShapeError):
                raise
            # the tensor engine rejects non-finite values at the op that
            # first produces them; surface it as a divergence at this epoch
            raise TrainingDiverged(epoch) from e
        if not (np.isfinite(d_l) and np.isfinite(g_l)):
            raise TrainingDiverged(epoch)
        wd = None
        if snapshot_fn is not None and cfg.snapshot_every > 0 \
                and (epoch + 1) % cfg.snapshot_every == 0:
            wd = snapshot_fn(g, epoch)
        trace.append(epoch, d_l, g_l, wd)
    return TrainResult(generator=g, discriminator=d, trace=trace)


def channel_seed(seed: int, k: int) -> int:
    """Stable per-channel seed; independent of sibling channels."""
    return int(np.random.SeedSequence((seed, k)).generate_state(1)[0])


def _train_one(args):
    x_k, labels, provenance, seizure, rate, name, cfg, gen_spec, disc_spec = args
    part = SampleSet(windows=x_k, labels=labels, provenance=provenance,
                     seizure=seizure, rate=rate,
                     channels=(name,) if name else ())
    res = train_channel(part, cfg, gen_spec=gen_spec, disc_spec=disc_spec)
    values = {n: t.data for n, t in res.generator.params.items()}
    return res.generator.spec, values, res.trace


def train_all_channels(dataset: SampleSet, cfg: TrainConfig,
                       gen_spec: ModelSpec | None = None,
                       disc_spec: ModelSpec | None = None,
                       workers: int = 1) -> tuple:
    """One generator per channel, each trained on its own channel slice.

    Returns (GeneratorBank, [TrainTrace]). Channel k's job is seeded from
    (cfg.seed, k), so retraining any single channel alone reproduces its
    parameters exactly.
    """
    n, channels, length = dataset.windows.shape
    if channels < 1:
        raise DataError("dataset has no channels")
    names = dataset.channels or tuple(f"ch{k}" for k in range(channels))
    jobs = []
    for k in range(channels):
        cfg_k = replace(cfg, seed=channel_seed(cfg.seed, k))
        jobs.append((dataset.windows[:, k:k + 1, :], dataset.labels,
                     dataset.provenance, dataset.seizure, dataset.rate,
                     names[k], cfg_k, gen_spec, disc_spec))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_train_one, jobs))
    else:
        outcomes = [_train_one(j) for j in jobs]
    generators, traces = [], []
    for spec, values, trace in outcomes:
        model = build_model(spec, np.random.default_rng(0))
        model.params.load_values(values)
        generators.append(model)
        traces.append(trace)
    return GeneratorBank(generators, names), traces
