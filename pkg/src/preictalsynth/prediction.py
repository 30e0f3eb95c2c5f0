"""Seizure-prediction baseline and the augmentation-ratio experiment.

The classifier is a small convolutional network over raw multichannel
windows: three 1-D convolution blocks along time, two 2-D convolution
blocks over the resulting feature plane, then two fully connected
layers ending in a sigmoid probability (preictal = positive class).

Evaluation is patient-specific leave-one-seizure-out cross-validation:
each fold holds out one leading seizure's preictal windows for testing
and trains on the preictal windows of all other seizures. Interictal
windows are subsampled (seeded, without replacement) to match preictal
counts in both phases; when the training preictal side is augmented
with synthetic windows, the interictal side is matched to the
augmented total, so every training and test phase stays balanced.
Each fold is repeated over several runs with distinct seeds and the
reported numbers are run averages. Run seeds depend only on (seed,
fold, run), never on the augmentation ratio, so conditions are paired.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .evaluation import bce_loss
from .params import AdamState, ParamStore, adam_step, init_normal, init_zeros
from .sampleset import SampleSet, concat_sets
from .tensor import (Tensor, backward, conv1d, conv2d, dense, leaky_relu,
                     maxpool1d, maxpool2d, no_grad, reshape, sigmoid)


@dataclass(frozen=True)
class ClassifierSpec:
    """Topology of the prediction network.

    Exactly three 1-D blocks (conv + pool2 along time) and two 2-D
    blocks (conv + pool2 over the feature plane), so the time axis
    shrinks 32x and the feature axis 4x before the dense layers.
    """

    channels: int = 22
    length: int = 5120
    conv1d_widths: tuple = (32, 32, 64)
    conv1d_kernel: int = 5
    conv2d_widths: tuple = (8, 16)
    conv2d_kernel: int = 3
    fc_width: int = 64
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "conv1d_widths", tuple(self.conv1d_widths))
        object.__setattr__(self, "conv2d_widths", tuple(self.conv2d_widths))
        if len(self.conv1d_widths) != 3:
            raise ConfigError(f"need exactly three 1-D conv widths, got "
                              f"{self.conv1d_widths}")
        if len(self.conv2d_widths) != 2:
            raise ConfigError(f"need exactly two 2-D conv widths, got "
                              f"{self.conv2d_widths}")
        for attr in ("channels", "length", "fc_width"):
            if getattr(self, attr) < 1:
                raise ConfigError(f"{attr} must be positive, got "
                                  f"{getattr(self, attr)}")
        if any(w < 1 for w in self.conv1d_widths + self.conv2d_widths):
            raise ConfigError("conv widths must be positive")
        for attr in ("conv1d_kernel", "conv2d_kernel"):
            k = getattr(self, attr)
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"{attr} must be odd and positive, got {k}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ConfigError(f"leaky_slope must be in (0, 1), got "
                              f"{self.leaky_slope}")
        if self.length % 32:
            raise ConfigError(f"length {self.length} does not survive the "
                              f"pooling chain (needs a multiple of 32)")
        if self.conv1d_widths[-1] % 4:
            raise ConfigError(f"last 1-D width {self.conv1d_widths[-1]} must "
                              f"be a multiple of 4 for the 2-D pooling")

    @property
    def plane_shape(self) -> tuple:
        """(height, width) of the feature plane entering the 2-D stage."""
        return self.conv1d_widths[-1], self.length // 8

    @property
    def flat_size(self) -> int:
        h, w = self.plane_shape
        return self.conv2d_widths[-1] * (h // 4) * (w // 4)


class Classifier:
    def __init__(self, spec: ClassifierSpec, rng: np.random.Generator):
        self.spec = spec
        self.params = ParamStore()
        s = spec
        # Fan-in scaled init: six layers deep, a fixed small std would
        # shrink activations to numerical dust before the head.
        widths = (s.channels,) + s.conv1d_widths
        for i in range(1, 4):
            fan = widths[i - 1] * s.conv1d_kernel
            init_normal(self.params, f"conv{i}.k",
                        (widths[i], widths[i - 1], s.conv1d_kernel), rng,
                        std=np.sqrt(2.0 / fan))
            init_zeros(self.params, f"conv{i}.b", (widths[i],))
        planes = (1,) + s.conv2d_widths
        for j in range(1, 3):
            fan = planes[j - 1] * s.conv2d_kernel ** 2
            init_normal(self.params, f"plane{j}.k",
                        (planes[j], planes[j - 1], s.conv2d_kernel,
                         s.conv2d_kernel), rng, std=np.sqrt(2.0 / fan))
            init_zeros(self.params, f"plane{j}.b", (planes[j],))
        init_normal(self.params, "fc.w", (s.fc_width, s.flat_size), rng,
                    std=np.sqrt(1.0 / s.flat_size))
        init_zeros(self.params, "fc.b", (s.fc_width,))
        init_normal(self.params, "out.w", (1, s.fc_width), rng,
                    std=np.sqrt(1.0 / s.fc_width))
        init_zeros(self.params, "out.b", (1,))

    def forward(self, x) -> Tensor:
        """Probability of the preictal class, shape (batch, 1)."""
        s, p = self.spec, self.params
        t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        if t.data.ndim == 2 and t.shape == (s.channels, s.length):
            t = reshape(t, (1, s.channels, s.length))
        if t.data.ndim != 3 or t.shape[1:] != (s.channels, s.length):
            raise ShapeError(f"classifier input must be ({s.channels}, "
                             f"{s.length}) or batched, got {t.shape}")
        h = t
        for i in range(1, 4):
            h = leaky_relu(conv1d(h, p[f"conv{i}.k"], padding="same",
                                  bias=p[f"conv{i}.b"]), s.leaky_slope)
            h = maxpool1d(h, 2)
        ph, pw = s.plane_shape
        h = reshape(h, (h.shape[0], 1, ph, pw))
        for j in range(1, 3):
            h = leaky_relu(conv2d(h, p[f"plane{j}.k"], padding="same",
                                  bias=p[f"plane{j}.b"]), s.leaky_slope)
            h = maxpool2d(h, 2)
        h = reshape(h, (h.shape[0], s.flat_size))
        h = leaky_relu(dense(h, p["fc.w"], p["fc.b"]), s.leaky_slope)
        return sigmoid(dense(h, p["out.w"], p["out.b"]))

    def param_count(self) -> int:
        return self.params.value_count()


def build_classifier(spec: ClassifierSpec,
                     rng: np.random.Generator | None = None) -> Classifier:
    if rng is None:
        rng = np.random.default_rng(0)
    return Classifier(spec, rng)


def _targets(labels) -> np.ndarray:
    return np.array([1.0 if l == "preictal" else 0.0 for l in labels])


def train_classifier(model: Classifier, train: SampleSet, lr: float = 1e-4,
                     batch: int = 16, epochs: int = 50, seed=0) -> list:
    """Shuffled minibatch binary cross-entropy; returns per-epoch mean loss."""
    if batch < 1 or epochs < 0:
        raise ConfigError(f"batch {batch} and epochs {epochs} out of range")
    if train.n < 1:
        raise DataError("training set is empty")
    y = _targets(train.labels)
    rng = np.random.default_rng(seed)
    state = AdamState(lr=lr)
    losses = []
    for _ in range(epochs):
        perm = rng.permutation(train.n)
        batch_losses = []
        for lo in range(0, train.n, batch):
            idx = perm[lo:lo + batch]
            probs = model.forward(train.windows[idx])
            loss = bce_loss(probs, y[idx].reshape(-1, 1))
            model.params.zero_grad()
            backward(loss, params=model.params)
            adam_step(model.params, state)
            batch_losses.append(loss.item())
        losses.append(float(np.mean(batch_losses)))
    return losses


def predict(model: Classifier, samples) -> np.ndarray:
    """Preictal probabilities, one per window."""
    w = samples.windows if isinstance(samples, SampleSet) else np.asarray(samples)
    with no_grad():
        return model.forward(w).data[:, 0].copy()


def accuracy(probs: np.ndarray, targets: np.ndarray,
             threshold: float = 0.5) -> float:
    """Percent of windows on the correct side of the threshold."""
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if probs.shape != targets.shape or probs.size == 0:
        raise DataError(f"got {probs.shape} scores for {targets.shape} targets")
    return float(np.mean((probs >= threshold) == (targets == 1.0)) * 100.0)


@dataclass(frozen=True)
class RocCurve:
    points: tuple     # ((fpr, tpr), ...) from (0,0) to (1,1)
    auc: float


def roc_auc(scores) -> RocCurve:
    """Threshold sweep over the unique score values.

    Tied scores enter together, which makes the trapezoidal area equal
    the tie-corrected rank statistic (ties count half).
    """
    pairs = list(scores)
    if not pairs:
        raise DataError("no scores")
    probs = np.array([float(p) for p, _ in pairs])
    ys = np.array([int(y) for _, y in pairs])
    if set(ys.tolist()) != {0, 1}:
        raise DataError("need both classes to sweep a ROC curve")
    npos = int((ys == 1).sum())
    nneg = int((ys == 0).sum())
    order = np.argsort(-probs, kind="stable")
    probs, ys = probs[order], ys[order]
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(probs):
        j = i
        while j < len(probs) and probs[j] == probs[i]:
            tp += int(ys[j] == 1)
            fp += int(ys[j] == 0)
            j += 1
        points.append((fp / nneg, tp / npos))
        i = j
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=tuple(points), auc=float(auc))


def da_mix(train_preictal: SampleSet, pool: SampleSet | None, ratio: int,
           seed=0) -> SampleSet:
    """Augment real preictal windows with ratio x as many synthetic ones.

    Ratio 0 is the all-real condition and returns the input unchanged.
    The synthetic subset is a seeded draw without replacement, so the
    mix is reproducible.
    """
    if ratio < 0 or int(ratio) != ratio:
        raise ConfigError(f"ratio must be a non-negative integer, got {ratio}")
    if ratio == 0:
        return train_preictal
    if pool is None:
        raise DataError(f"ratio {ratio} augmentation needs a synthetic pool")
    if any(p != "synthetic" for p in pool.provenance):
        raise DataError("pool must be entirely synthetic")
    if any(l != "preictal" for l in pool.labels):
        raise DataError("pool must be entirely preictal")
    need = int(ratio) * train_preictal.n
    if pool.n < need:
        raise DataError(f"pool has {pool.n} windows but ratio {ratio} x "
                        f"{train_preictal.n} real windows needs {need}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(pool.n, size=need, replace=False))
    return concat_sets([train_preictal, pool.select(idx)])


@dataclass(frozen=True)
class FoldPlan:
    seizure: int          # held-out seizure id
    train_pre: tuple      # dataset indices, real preictal of other seizures
    test_pre: tuple
    train_inter: tuple
    test_inter: tuple


@dataclass(frozen=True)
class CvPlan:
    folds: tuple
    ratio: int
    runs: int
    seed: int


def _plan_entropy(seed) -> int:
    return int(seed) & 0xFFFFFFFF


def build_cv_plan(dataset: SampleSet, ratio: int = 0, runs: int = 5,
                  seed=0) -> CvPlan:
    """One fold per leading seizure with matched interictal draws.

    The interictal shuffle for a fold depends only on (seed, fold), so
    different ratios share the same test windows and nest their
    training windows (a prefix relation), keeping conditions paired.
    """
    if runs < 1:
        raise ConfigError(f"runs must be positive, got {runs}")
    if ratio < 0:
        raise ConfigError(f"ratio must be non-negative, got {ratio}")
    labels = np.array(dataset.labels)
    owners = np.array(dataset.seizure)
    pre_mask = labels == "preictal"
    inter_idx = np.flatnonzero(labels == "interictal")
    fold_seizures = [s for s in dataset.leading if np.any(owners[pre_mask] == s)]
    if len(fold_seizures) < 2:
        raise DataError(f"cross-validation needs at least 2 leading seizures "
                        f"with preictal windows, found {len(fold_seizures)}")
    folds = []
    for k, s in enumerate(fold_seizures):
        test_pre = np.flatnonzero(pre_mask & (owners == s))
        train_pre = np.flatnonzero(pre_mask & (owners != s))
        n_test = len(test_pre)
        n_train = (1 + ratio) * len(train_pre)
        if n_test + n_train > len(inter_idx):
            raise DataError(f"fold {k} needs {n_test + n_train} interictal "
                            f"windows, dataset has {len(inter_idx)}")
        rng = np.random.default_rng(
            np.random.SeedSequence((_plan_entropy(seed), k)))
        shuffled = inter_idx[rng.permutation(len(inter_idx))]
        folds.append(FoldPlan(
            seizure=int(s),
            train_pre=tuple(int(i) for i in train_pre),
            test_pre=tuple(int(i) for i in test_pre),
            train_inter=tuple(int(i) for i in shuffled[n_test:n_test + n_train]),
            test_inter=tuple(int(i) for i in shuffled[:n_test])))
    return CvPlan(folds=tuple(folds), ratio=int(ratio), runs=int(runs),
                  seed=int(seed))


@dataclass(frozen=True)
class CvConfig:
    spec: ClassifierSpec | None = None   # None: sized from the dataset
    lr: float = 1e-4
    batch: int = 16
    epochs: int = 50
    runs: int = 5
    seed: int = 0
    threshold: float = 0.5
    subject: str = "subject"

    def __post_init__(self):
        if self.lr <= 0 or self.batch < 1 or self.epochs < 0 or self.runs < 1:
            raise ConfigError("lr, batch, epochs, runs out of range")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0, 1), got "
                              f"{self.threshold}")


@dataclass(frozen=True)
class PredictionReport:
    subject: str
    condition: int                 # augmentation ratio
    rows: tuple                    # (fold, run, acc, auc)
    curves: tuple                  # (fold, run, ((fpr, tpr), ...))

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([r[2] for r in self.rows]))

    @property
    def mean_auc(self) -> float:
        return float(np.mean([r[3] for r in self.rows]))

    def to_csv(self) -> str:
        lines = ["subject,fold,condition,run,acc,auc"]
        for fold, run, acc, auc in self.rows:
            lines.append(f"{self.subject},{fold},{self.condition},{run},"
                         f"{acc:.10g},{auc:.10g}")
        return "\n".join(lines) + "\n"

    def roc_csv(self) -> str:
        lines = ["subject,fold,condition,run,fpr,tpr"]
        for fold, run, points in self.curves:
            for fpr, tpr in points:
                lines.append(f"{self.subject},{fold},{self.condition},{run},"
                             f"{fpr:.10g},{tpr:.10g}")
        return "\n".join(lines) + "\n"


def _spec_for(dataset: SampleSet, cfg: CvConfig) -> ClassifierSpec:
    if cfg.spec is not None:
        return cfg.spec
    c, length = dataset.window_shape
    return ClassifierSpec(channels=c, length=length)


def _cv_job(args):
    """One (fold, run) cell. Module-level so worker processes can unpickle
    it; everything it needs arrives in args and it reseeds from scratch,
    which is what makes the result independent of scheduling."""
    dataset, pool, ratio, cfg, spec, fold, k, r = args
    mix_seed = np.random.SeedSequence((_plan_entropy(cfg.seed), k, 271828))
    mixed = da_mix(dataset.select(fold.train_pre), pool, ratio, seed=mix_seed)
    train = concat_sets([mixed, dataset.select(fold.train_inter)])
    test = concat_sets([dataset.select(fold.test_pre),
                        dataset.select(fold.test_inter)])
    y = _targets(test.labels)
    init_ss, shuffle_ss = np.random.SeedSequence(
        (_plan_entropy(cfg.seed), k, r)).spawn(2)
    model = build_classifier(spec, np.random.default_rng(init_ss))
    train_classifier(model, train, lr=cfg.lr, batch=cfg.batch,
                     epochs=cfg.epochs, seed=shuffle_ss)
    probs = predict(model, test)
    curve = roc_auc(zip(probs.tolist(), y.astype(int).tolist()))
    return k, r, accuracy(probs, y, cfg.threshold), curve.auc, curve.points


def loso_cv(dataset: SampleSet, pool: SampleSet | None, ratio: int,
            cfg: CvConfig, workers: int = 1) -> PredictionReport:
    """Leave-one-seizure-out evaluation at one augmentation ratio.

    Fold/run cells are seeded independently, so results are identical
    whether they run serially or across worker processes.
    """
    plan = build_cv_plan(dataset, ratio, cfg.runs, cfg.seed)
    spec = _spec_for(dataset, cfg)
    jobs = [(dataset, pool, ratio, cfg, spec, fold, k, r)
            for k, fold in enumerate(plan.folds) for r in range(cfg.runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outcomes = list(ex.map(_cv_job, jobs))
    else:
        outcomes = [_cv_job(j) for j in jobs]
    rows = tuple((k, r, acc, auc) for k, r, acc, auc, _ in outcomes)
    curves = tuple((k, r, pts) for k, r, _, _, pts in outcomes)
    return PredictionReport(subject=cfg.subject, condition=int(ratio),
                            rows=rows, curves=curves)


@dataclass(frozen=True)
class ConditionTable:
    reports: tuple                 # PredictionReport per ratio, input order

    def report(self, ratio: int) -> PredictionReport:
        for rep in self.reports:
            if rep.condition == ratio:
                return rep
        raise KeyError(ratio)

    def summary(self) -> list:
        return [(rep.condition, rep.mean_accuracy, rep.mean_auc)
                for rep in self.reports]

    def to_csv(self) -> str:
        lines = ["subject,fold,condition,run,acc,auc"]
        for rep in self.reports:
            lines.extend(rep.to_csv().strip().split("\n")[1:])
        return "\n".join(lines) + "\n"

    def summary_csv(self) -> str:
        lines = ["condition,acc,auc"]
        for ratio, acc, auc in self.summary():
            lines.append(f"{ratio},{acc:.10g},{auc:.10g}")
        return "\n".join(lines) + "\n"


def compare_conditions(dataset: SampleSet, pool: SampleSet | None,
                       ratios=(0, 3, 5, 10), cfg: CvConfig = CvConfig(),
                       workers: int = 1) -> ConditionTable:
    """Paired augmentation study: same folds and run seeds per condition."""
    reports = tuple(loso_cv(dataset, pool, r, cfg, workers=workers)
                    for r in ratios)
    return ConditionTable(reports=reports)


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
               "#8c564b", "#17becf", "#7f7f7f")


def roc_svg(curves, title: str = "ROC", size: int = 360) -> str:
    """Standalone SVG: FPR/TPR axes, diagonal reference, one polyline
    per named curve. No timestamps, so output is byte-stable."""
    pad, box = 46, size
    w = h = box + 2 * pad
    x0, y0 = pad, pad

    def px(fpr):
        return x0 + fpr * box

    def py(tpr):
        return y0 + (1.0 - tpr) * box

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" '
             f'height="{h}" viewBox="0 0 {w} {h}">',
             f'<rect width="{w}" height="{h}" fill="white"/>',
             f'<text x="{w / 2:.6g}" y="{pad - 22}" text-anchor="middle" '
             f'font-family="sans-serif" font-size="14">{title}</text>',
             f'<rect x="{x0}" y="{y0}" width="{box}" height="{box}" '
             f'fill="none" stroke="black"/>',
             f'<line x1="{px(0):.6g}" y1="{py(0):.6g}" x2="{px(1):.6g}" '
             f'y2="{py(1):.6g}" stroke="#888" stroke-dasharray="5,4"/>',
             f'<text x="{w / 2:.6g}" y="{h - 8}" text-anchor="middle" '
             f'font-family="sans-serif" font-size="12">false positive rate</text>',
             f'<text x="14" y="{h / 2:.6g}" text-anchor="middle" '
             f'font-family="sans-serif" font-size="12" '
             f'transform="rotate(-90 14 {h / 2:.6g})">true positive rate</text>']
    for tick in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{px(tick):.6g}" y="{y0 + box + 16}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="10">{tick:g}</text>')
        parts.append(f'<text x="{x0 - 6}" y="{py(tick) + 4:.6g}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="10">{tick:g}</text>')
    for i, (name, points) in enumerate(curves):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        coords = " ".join(f"{px(fp):.2f},{py(tp):.2f}" for fp, tp in points)
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{x0 + box - 6}" y="{y0 + 16 + 14 * i}" '
                     f'text-anchor="end" font-family="sans-serif" '
                     f'font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
