"""Run configuration: layered flat dotted-key settings.

Precedence, lowest to highest: built-in defaults, config file,
environment variables, command-line flags. A config file holds
`key = value` lines with `#` comments; keys are dotted paths like
`train.mode`. An environment variable overrides the key obtained by
upper-casing it and replacing dots with underscores (`TRAIN_MODE`).

Defaults follow the published full-scale recipe: 20 s windows cut with
SPH 5 min / preictal 30 min / postictal 30 min, recordings at 256 Hz
modelled at 100 Hz, the convolutional Wasserstein pair trained with
batch 32 for 30000 iterations, and augmentation ratios 0/3/5/10
evaluated over 5 runs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace

from .annotations import DEFAULT_LEADING_GAP, PeriodConfig
from .errors import ConfigError
from .prediction import CvConfig
from .training import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline command needs, one flat record."""

    # data: inputs and harvest geometry
    manifest: str = "data/manifest.txt"
    subject: str = ""                    # label for reports; manifest may set it
    sph_seconds: float = 300.0
    preictal_seconds: float = 1800.0
    postictal_seconds: float = 1800.0
    leading_gap_seconds: float = DEFAULT_LEADING_GAP
    window_seconds: float = 20.0
    record_rate: float = 256.0           # required rate of ingested recordings
    train_rate: float = 100.0            # generators model this rate
    # train: adversarial schedule
    train_mode: str = "wgan"
    train_family: str = "cnn"
    train_batch: int = 32
    train_epochs: int = 30000
    train_lr: float = 1e-5
    train_clip: float = 0.01
    train_critic_steps: int = 0          # 0 = by mode (5 for wgan, 1 for gan)
    train_snapshot_every: int = 0
    # pool
    pool_size: int = 0                   # 0 = sized to the largest DA ratio
    # eval
    eval_pairs: int = 100
    eval_embed_epochs: int = 60
    # cv: classifier schedule and study design
    cv_ratios: tuple = (0, 3, 5, 10)
    cv_runs: int = 5
    cv_lr: float = 1e-4
    cv_batch: int = 16
    cv_epochs: int = 50
    cv_threshold: float = 0.5
    cv_rate: float = 0.0                 # classifier input rate; 0 = record rate
    # run
    seed: int = 0
    out_dir: str = "out"
    workers: int = 0                     # 0 = all available cores

    def __post_init__(self):
        for name in ("sph_seconds", "preictal_seconds", "postictal_seconds",
                     "leading_gap_seconds"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("window_seconds", "record_rate", "train_rate"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.cv_rate < 0:
            raise ConfigError(f"cv_rate must be >= 0, got {self.cv_rate}")
        if self.train_rate > self.record_rate:
            raise ConfigError(f"train rate {self.train_rate} exceeds record "
                              f"rate {self.record_rate}")
        if self.cv_rate > self.record_rate:
            raise ConfigError(f"classifier rate {self.cv_rate} exceeds record "
                              f"rate {self.record_rate}")
        if not self.cv_ratios:
            raise ConfigError("cv ratios must name at least one condition")
        if any(r < 0 for r in self.cv_ratios):
            raise ConfigError(f"cv ratios must be >= 0, got {self.cv_ratios}")
        for name in ("pool_size", "eval_pairs", "eval_embed_epochs", "cv_runs",
                     "workers"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        object.__setattr__(self, "cv_ratios", tuple(self.cv_ratios))
        self.train_length()   # whole-sample check
        self.cv_length()

    # -- derived views ------------------------------------------------

    def period_config(self) -> PeriodConfig:
        return PeriodConfig(sph_seconds=self.sph_seconds,
                            preictal_seconds=self.preictal_seconds,
                            postictal_seconds=self.postictal_seconds)

    def train_config(self) -> TrainConfig:
        return TrainConfig(mode=self.train_mode, clip=self.train_clip,
                           batch=self.train_batch,
                           critic_steps=self.train_critic_steps,
                           epochs=self.train_epochs, lr=self.train_lr,
                           seed=self.seed, family=self.train_family,
                           snapshot_every=self.train_snapshot_every)

    def cv_config(self, spec=None) -> CvConfig:
        return CvConfig(spec=spec, lr=self.cv_lr, batch=self.cv_batch,
                        epochs=self.cv_epochs, runs=self.cv_runs,
                        seed=self.seed, threshold=self.cv_threshold,
                        subject=self.subject or "subject")

    def _length_at(self, rate: float, what: str) -> int:
        n = int(round(self.window_seconds * rate))
        if abs(n - self.window_seconds * rate) > 1e-9 or n <= 0:
            raise ConfigError(f"window of {self.window_seconds}s is not a "
                              f"whole number of samples at the {what} rate "
                              f"{rate} Hz")
        return n

    def train_length(self) -> int:
        return self._length_at(self.train_rate, "modelling")

    def effective_cv_rate(self) -> float:
        return self.cv_rate or self.record_rate

    def cv_length(self) -> int:
        return self._length_at(self.effective_cv_rate(), "classifier")

    def effective_workers(self) -> int:
        return self.workers or os.cpu_count() or 1


def _parse_ratios(value: str) -> tuple:
    parts = [p for p in value.replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError("empty ratio list")
    return tuple(int(p) for p in parts)


def _format_ratios(value) -> str:
    return ",".join(str(r) for r in value)


# key -> (RunConfig field, parser). Key order is the documentation order.
KEYS = {
    "data.manifest": ("manifest", str),
    "data.subject": ("subject", str),
    "data.sph_seconds": ("sph_seconds", float),
    "data.preictal_seconds": ("preictal_seconds", float),
    "data.postictal_seconds": ("postictal_seconds", float),
    "data.leading_gap_seconds": ("leading_gap_seconds", float),
    "data.window_seconds": ("window_seconds", float),
    "data.record_rate": ("record_rate", float),
    "data.train_rate": ("train_rate", float),
    "train.mode": ("train_mode", str),
    "train.family": ("train_family", str),
    "train.batch": ("train_batch", int),
    "train.epochs": ("train_epochs", int),
    "train.lr": ("train_lr", float),
    "train.clip": ("train_clip", float),
    "train.critic_steps": ("train_critic_steps", int),
    "train.snapshot_every": ("train_snapshot_every", int),
    "pool.size": ("pool_size", int),
    "eval.pairs": ("eval_pairs", int),
    "eval.embed_epochs": ("eval_embed_epochs", int),
    "cv.ratios": ("cv_ratios", _parse_ratios),
    "cv.runs": ("cv_runs", int),
    "cv.lr": ("cv_lr", float),
    "cv.batch": ("cv_batch", int),
    "cv.epochs": ("cv_epochs", int),
    "cv.threshold": ("cv_threshold", float),
    "cv.rate": ("cv_rate", float),
    "run.seed": ("seed", int),
    "run.out_dir": ("out_dir", str),
    "run.workers": ("workers", int),
}


def env_name(key: str) -> str:
    return key.upper().replace(".", "_")


def parse_config_text(text: str, origin: str = "config") -> dict:
    """`key = value` lines into {dotted key: raw string}."""
    raw: dict = {}
    for no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{origin} line {no}: expected key = value, "
                              f"got {stripped!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KEYS:
            raise ConfigError(f"{origin} line {no}: unknown key {key!r} "
                              f"(known keys: {', '.join(sorted(KEYS))})")
        if key in raw:
            raise ConfigError(f"{origin} line {no}: duplicate key {key!r}")
        raw[key] = value
    return raw


def _coerce(key: str, value: str):
    field_name, parser = KEYS[key]
    try:
        return field_name, parser(value)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"{key}: cannot parse {value!r}: {e}") from None


def load_run_config(path: str | None = None, env=None,
                    overrides: dict | None = None) -> RunConfig:
    """Layer defaults <- file <- environment <- explicit overrides.

    `overrides` maps RunConfig field names to already-typed values
    (the CLI's --seed/--out/--workers land here).
    """
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        raw.update(parse_config_text(text, origin=path))
    env = os.environ if env is None else env
    for key in KEYS:
        name = env_name(key)
        if name in env:
            raw[key] = env[name]
    values = dict(_coerce(k, v) for k, v in raw.items())
    if overrides:
        valid = {f.name for f in fields(RunConfig)}
        for name in overrides:
            if name not in valid:
                raise ConfigError(f"unknown config field {name!r}")
        values.update(overrides)
    return RunConfig(**values)


def describe_keys() -> str:
    """One line per key with its default, for --help and the README."""
    base = RunConfig()
    lines = []
    for key, (field_name, parser) in KEYS.items():
        value = getattr(base, field_name)
        if parser is _parse_ratios:
            value = _format_ratios(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def desk_profile(**extra) -> RunConfig:
    """Desk-scale profile for the bundled demonstration pipeline.

    Small model-free knobs only; the demo command pairs this with
    correspondingly small architecture specs. Keyword arguments replace
    fields (same names as RunConfig).
    """
    base = RunConfig(
        subject="demo",
        sph_seconds=300.0,
        preictal_seconds=600.0,
        postictal_seconds=600.0,
        leading_gap_seconds=3000.0,
        train_rate=25.0,
        train_batch=16,
        train_epochs=800,
        train_lr=1e-4,
        pool_size=200,
        eval_pairs=30,
        eval_embed_epochs=40,
        cv_ratios=(0, 3),
        cv_runs=2,
        cv_lr=2e-3,
        cv_epochs=20,
        cv_rate=12.8,
    )
    return replace(base, **extra) if extra else base
