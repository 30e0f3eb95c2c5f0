"""Named parameter collections, Adam updates, and weight clipping.

Parameters live in insertion order inside a ParamStore; with the same seed
and the same construction order a rebuild is bitwise identical, which is
what makes checkpoints and retraining reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MissingGradient, ShapeError
from .tensor import Tensor


class ParamStore:
    """Ordered mapping of name -> trainable Tensor."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def value_count(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        """Overwrite parameter data in place; names and shapes must match."""
        missing = [n for n in self._params if n not in values]
        extra = [n for n in values if n not in self._params]
        if missing or extra:
            raise ShapeError(f"parameter names differ: missing {missing}, unexpected {extra}")
        for name, t in self._params.items():
            arr = np.asarray(values[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ShapeError(f"parameter {name!r}: stored {arr.shape} vs model {t.data.shape}")
            t.data = arr


def init_normal(store: ParamStore, name: str, shape, rng: np.random.Generator,
                std: float = 0.02) -> Tensor:
    """Weight init: zero-mean normal, default std 0.02."""
    return store.add(name, rng.normal(0.0, std, size=shape))


def init_zeros(store: ParamStore, name: str, shape) -> Tensor:
    """Bias init: zeros."""
    return store.add(name, np.zeros(shape, dtype=np.float64))


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParamStore, state: AdamState) -> None:
    """One Adam update with bias correction over every parameter.

    Requires backward() to have populated every gradient first. Updates are
    out of place so arrays captured by earlier graphs keep their values.
    """
    for name, t in params.items():
        if t.grad is None:
            raise MissingGradient(f"parameter {name!r} has no gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, t in params.items():
        g = t.grad
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(t.data)
            v = np.zeros_like(t.data)
        else:
            v = state.v[name]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        t.data = t.data - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def clip_weights(params: ParamStore, c: float) -> None:
    """Clip every parameter into [-c, c] elementwise. Idempotent."""
    if not c > 0.0:
        raise ValueError(f"clip bound must be positive, got {c}")
    for _, t in params.items():
        t.data = np.clip(t.data, -c, c)
