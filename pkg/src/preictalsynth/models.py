"""Generator and discriminator architectures.

Two families, each in generator and discriminator roles:

* cnn: the generator expands a length-100 latent through a fully connected
  layer into a deep low-resolution feature map, then doubles the length
  four times (upsample, width-5 convolution, leaky ReLU) and finishes with
  a pixel-wise convolution and tanh. The discriminator mirrors it with
  four conv/pool/leaky blocks and two fully connected layers whose 64-wide
  penultimate output doubles as an embedding for distribution metrics.
* rnn: both roles run a bidirectional LSTM over 20 time steps with two
  fully connected layers shared across steps.

Discriminators end in a sigmoid only in "gan" mode; "wgan" mode leaves the
score linear and unbounded. All parameters start from N(0, 0.02) except
biases, which start at zero.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .checkpoint import read_checkpoint, write_checkpoint
from .errors import ConfigError, DataError, ShapeError
from .lstm import bilstm, init_bilstm
from .params import ParamStore, init_normal, init_zeros
from .tensor import (
    Tensor,
    conv1d,
    dense,
    leaky_relu,
    maxpool1d,
    reshape,
    sigmoid,
    tanh,
    upsample1d,
)

FAMILIES = ("cnn", "rnn")
ROLES = ("generator", "discriminator")
MODES = ("gan", "wgan")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture knobs. Defaults reproduce the full-scale networks;
    tests shrink them via replace()."""

    family: str
    role: str
    mode: str = "gan"
    latent: int = 100
    out_length: int = 2000
    channels: int = 1
    base_depth: int = 256                  # cnn generator depth at the reshape
    block_widths: tuple = (128, 64, 32, 32)  # cnn generator conv widths
    disc_widths: tuple = (32, 64, 128, 256)  # cnn discriminator conv widths
    embed_size: int = 64                   # discriminator penultimate width
    hidden: int = 64                       # rnn hidden units per direction
    steps: int = 20                        # rnn time steps
    step_fc: int = 64                      # rnn shared per-step fc width
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.role not in ROLES:
            raise ConfigError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        for attr in ("latent", "out_length", "channels", "base_depth",
                     "embed_size", "hidden", "steps", "step_fc"):
            if getattr(self, attr) <= 0:
                raise ConfigError(f"{attr} must be positive, got {getattr(self, attr)}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")
        object.__setattr__(self, "block_widths", tuple(self.block_widths))
        object.__setattr__(self, "disc_widths", tuple(self.disc_widths))
        if self.family == "cnn":
            chain = self.block_widths if self.role == "generator" \
                else self.disc_widths
            step = 2 ** len(chain)
            if self.out_length % step:
                raise ConfigError(f"out_length {self.out_length} is not divisible by "
                                  f"the {step}x resampling chain")
        else:
            if self.latent % self.steps:
                raise ConfigError(f"latent {self.latent} does not split into "
                                  f"{self.steps} steps")
            if self.out_length % self.steps:
                raise ConfigError(f"out_length {self.out_length} does not split into "
                                  f"{self.steps} steps")

    @property
    def seed_length(self) -> int:
        """cnn generator feature-map length before any upsampling."""
        return self.out_length // 2 ** len(self.block_widths)


def _as_batch(x, channels, length, what) -> tuple:
    """Coerce (L,), (C,L) or (B,C,L) input to a batched Tensor."""
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    if t.shape == (length,) and channels == 1:
        return reshape(t, (1, 1, length)), True
    if t.shape == (channels, length):
        return reshape(t, (1, channels, length)), True
    if t.data.ndim == 3 and t.shape[1:] == (channels, length):
        return t, False
    raise ShapeError(f"{what} must be ({channels}, {length}) or "
                     f"(batch, {channels}, {length}), got {t.shape}")


def _as_latent(z, latent) -> tuple:
    t = z if isinstance(z, Tensor) else Tensor(np.asarray(z, dtype=np.float64))
    if t.shape == (latent,):
        return reshape(t, (1, latent)), True
    if t.data.ndim == 2 and t.shape[1] == latent:
        return t, False
    raise ShapeError(f"latent must be ({latent},) or (batch, {latent}), got {t.shape}")


class _Model:
    def __init__(self, spec: ModelSpec, rng: np.random.Generator):
        self.spec = spec
        self.params = ParamStore()
        self._build(rng)

    def _build(self, rng):
        raise NotImplementedError

    def param_count(self) -> int:
        return self.params.value_count()


class CnnGenerator(_Model):
    def _build(self, rng):
        s = self.spec
        seed_units = s.base_depth * s.seed_length
        init_normal(self.params, "fc.w", (seed_units, s.latent), rng)
        init_zeros(self.params, "fc.b", (seed_units,))
        widths = (s.base_depth,) + s.block_widths
        for i, (cin, cout) in enumerate(zip(widths, widths[1:]), start=1):
            init_normal(self.params, f"block{i}.k", (cout, cin, 5), rng)
            init_zeros(self.params, f"block{i}.b", (cout,))
        init_normal(self.params, "pixel.k", (s.channels, s.block_widths[-1], 1), rng)
        init_zeros(self.params, "pixel.b", (s.channels,))

    def forward(self, z) -> Tensor:
        s, p = self.spec, self.params
        zb, single = _as_latent(z, s.latent)
        h = dense(zb, p["fc.w"], p["fc.b"])
        h = reshape(h, (zb.shape[0], s.base_depth, s.seed_length))
        for i in range(1, len(s.block_widths) + 1):
            h = upsample1d(h, 2, method="nearest")
            h = conv1d(h, p[f"block{i}.k"], padding="same", bias=p[f"block{i}.b"])
            h = leaky_relu(h, s.leaky_slope)
        h = conv1d(h, p["pixel.k"], padding="same", bias=p["pixel.b"])
        out = tanh(h)
        return reshape(out, (s.channels, s.out_length)) if single else out


class CnnDiscriminator(_Model):
    def _build(self, rng):
        s = self.spec
        widths = (s.channels,) + s.disc_widths
        length = s.out_length
        for i, (cin, cout) in enumerate(zip(widths, widths[1:]), start=1):
            init_normal(self.params, f"conv{i}.k", (cout, cin, 5), rng)
            init_zeros(self.params, f"conv{i}.b", (cout,))
            length //= 2
        flat = s.disc_widths[-1] * length
        init_normal(self.params, "head.w", (s.embed_size, flat), rng)
        init_zeros(self.params, "head.b", (s.embed_size,))
        init_normal(self.params, "score.w", (1, s.embed_size), rng)
        init_zeros(self.params, "score.b", (1,))

    def embed(self, x) -> Tensor:
        """Penultimate fully connected activations, one row per window."""
        s, p = self.spec, self.params
        xb, single = _as_batch(x, s.channels, s.out_length, "discriminator input")
        h = xb
        for i in range(1, len(s.disc_widths) + 1):
            h = conv1d(h, p[f"conv{i}.k"], padding="same", bias=p[f"conv{i}.b"])
            h = maxpool1d(h, 2)
            h = leaky_relu(h, s.leaky_slope)
        h = reshape(h, (xb.shape[0], h.data[0].size))
        e = leaky_relu(dense(h, p["head.w"], p["head.b"]), s.leaky_slope)
        return reshape(e, (s.embed_size,)) if single else e

    def forward(self, x) -> Tensor:
        s, p = self.spec, self.params
        xb, single = _as_batch(x, s.channels, s.out_length, "discriminator input")
        e = self.embed(xb)
        score = dense(e, p["score.w"], p["score.b"])
        if s.mode == "gan":
            score = sigmoid(score)
        return reshape(score, (1,)) if single else score


class RnnGenerator(_Model):
    def _build(self, rng):
        s = self.spec
        init_bilstm(self.params, "lstm", s.latent // s.steps, s.hidden, rng)
        init_normal(self.params, "fc1.w", (s.step_fc, 2 * s.hidden), rng)
        init_zeros(self.params, "fc1.b", (s.step_fc,))
        per_step = s.channels * s.out_length // s.steps
        init_normal(self.params, "fc2.w", (per_step, s.step_fc), rng)
        init_zeros(self.params, "fc2.b", (per_step,))

    def forward(self, z) -> Tensor:
        s, p = self.spec, self.params
        zb, single = _as_latent(z, s.latent)
        B = zb.shape[0]
        steps = reshape(zb, (B, s.steps, s.latent // s.steps))
        h = bilstm(steps, self.params, s.hidden, prefix="lstm")
        h = reshape(h, (B * s.steps, 2 * s.hidden))
        h = leaky_relu(dense(h, p["fc1.w"], p["fc1.b"]), s.leaky_slope)
        h = dense(h, p["fc2.w"], p["fc2.b"])          # shared across steps
        out = tanh(reshape(h, (B, s.channels, s.out_length)))
        return reshape(out, (s.channels, s.out_length)) if single else out


class RnnDiscriminator(_Model):
    def _build(self, rng):
        s = self.spec
        init_bilstm(self.params, "lstm", s.channels * s.out_length // s.steps,
                    s.hidden, rng)
        init_normal(self.params, "fc1.w", (s.step_fc, 2 * s.hidden), rng)
        init_zeros(self.params, "fc1.b", (s.step_fc,))
        init_normal(self.params, "score.w", (1, s.steps * s.step_fc), rng)
        init_zeros(self.params, "score.b", (1,))

    def forward(self, x) -> Tensor:
        s, p = self.spec, self.params
        xb, single = _as_batch(x, s.channels, s.out_length, "discriminator input")
        B = xb.shape[0]
        steps = reshape(xb, (B, s.steps, s.channels * s.out_length // s.steps))
        h = bilstm(steps, self.params, s.hidden, prefix="lstm")
        h = reshape(h, (B * s.steps, 2 * s.hidden))
        h = leaky_relu(dense(h, p["fc1.w"], p["fc1.b"]), s.leaky_slope)
        h = reshape(h, (B, s.steps * s.step_fc))
        score = dense(h, p["score.w"], p["score.b"])
        if s.mode == "gan":
            score = sigmoid(score)
        return reshape(score, (1,)) if single else score


_CLASSES = {
    ("cnn", "generator"): CnnGenerator,
    ("cnn", "discriminator"): CnnDiscriminator,
    ("rnn", "generator"): RnnGenerator,
    ("rnn", "discriminator"): RnnDiscriminator,
}


def build_model(spec: ModelSpec, rng: np.random.Generator):
    return _CLASSES[(spec.family, spec.role)](spec, rng)


def generate(model, z) -> Tensor:
    """Deterministic sample for a latent vector; output in [-1, 1]."""
    if model.spec.role != "generator":
        raise ConfigError(f"generate needs a generator, got a {model.spec.role}")
    return model.forward(z)


def save_model(model, path: str) -> None:
    """Spec header line (JSON) followed by the binary parameter container."""
    header = json.dumps(asdict(model.spec), sort_keys=True).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(header)
        write_checkpoint(model.params, fh)


def load_model(path: str):
    with open(path, "rb") as fh:
        header = fh.readline()
        body = fh.read()
    try:
        fields = json.loads(header.decode())
        fields["block_widths"] = tuple(fields["block_widths"])
        fields["disc_widths"] = tuple(fields["disc_widths"])
        spec = ModelSpec(**fields)
    except (ValueError, TypeError, KeyError) as e:
        raise DataError(f"{path}: bad model header: {e}") from None
    model = build_model(spec, np.random.default_rng(0))
    model.params.load_values(dict(read_checkpoint(body)))
    return model
