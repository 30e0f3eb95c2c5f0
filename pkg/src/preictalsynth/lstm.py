"""Bidirectional LSTM built from the autodiff primitives.

Gate equations per step (gates packed in i, f, g, o row order):

    i = sigmoid(Wx_i x + Wh_i h + b_i)      input gate
    f = sigmoid(Wx_f x + Wh_f h + b_f)      forget gate
    g = tanh   (Wx_g x + Wh_g h + b_g)      cell candidate
    o = sigmoid(Wx_o x + Wh_o h + b_o)      output gate
    c = f * c_prev + i * g
    h = o * tanh(c)

Initial h and c are zero. The backward direction consumes the reversed
sequence; per-step outputs are the forward and backward hidden states
concatenated, so hidden size H yields 2H features per step.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .params import ParamStore, init_normal, init_zeros
from .tensor import (Tensor, add, concat, dense, mul, reshape, sigmoid,
                     slice_axis, tanh)


def init_bilstm(store: ParamStore, prefix: str, input_size: int, hidden: int,
                rng: np.random.Generator, std: float = 0.02) -> None:
    """Create both directions' gate weights under the given name prefix."""
    for d in ("fwd", "bwd"):
        init_normal(store, f"{prefix}.{d}.wx", (4 * hidden, input_size), rng, std)
        init_normal(store, f"{prefix}.{d}.wh", (4 * hidden, hidden), rng, std)
        init_zeros(store, f"{prefix}.{d}.b", (4 * hidden,))


def _direction(xs: list[Tensor], wx: Tensor, wh: Tensor, b: Tensor,
               hidden: int, batch: int) -> list[Tensor]:
    h = Tensor(np.zeros((batch, hidden)))
    c = Tensor(np.zeros((batch, hidden)))
    outs = []
    for x_t in xs:
        gates = add(dense(x_t, wx, b), dense(h, wh))
        i = sigmoid(slice_axis(gates, 1, 0, hidden))
        f = sigmoid(slice_axis(gates, 1, hidden, 2 * hidden))
        g = tanh(slice_axis(gates, 1, 2 * hidden, 3 * hidden))
        o = sigmoid(slice_axis(gates, 1, 3 * hidden, 4 * hidden))
        c = add(mul(f, c), mul(i, g))
        h = mul(o, tanh(c))
        outs.append(h)
    return outs


def bilstm(x: Tensor, params: ParamStore, hidden: int,
           prefix: str = "bilstm") -> Tensor:
    """Run both directions over x: (T, F) or (B, T, F) -> (.., T, 2*hidden)."""
    batched = x.data.ndim == 3
    if not batched and x.data.ndim != 2:
        raise ShapeError(f"bilstm: input must be (T,F) or (B,T,F), got {x.data.shape}")
    key = f"{prefix}.fwd.wx"
    if key not in params:
        raise ShapeError(f"bilstm: parameter {key!r} not found in store")
    x3 = x if batched else reshape(x, (1,) + x.data.shape)
    B, T, F = x3.data.shape
    wx = params[f"{prefix}.fwd.wx"]
    if wx.data.shape != (4 * hidden, F):
        raise ShapeError(f"bilstm: weights {wx.data.shape} do not match input {x3.data.shape} "
                         f"with hidden {hidden}")
    steps = [reshape(slice_axis(x3, 1, t, t + 1), (B, F)) for t in range(T)]
    fwd = _direction(steps, params[f"{prefix}.fwd.wx"], params[f"{prefix}.fwd.wh"],
                     params[f"{prefix}.fwd.b"], hidden, B)
    bwd = _direction(steps[::-1], params[f"{prefix}.bwd.wx"], params[f"{prefix}.bwd.wh"],
                     params[f"{prefix}.bwd.b"], hidden, B)
    bwd = bwd[::-1]
    rows = [reshape(concat([fwd[t], bwd[t]], axis=1), (B, 1, 2 * hidden))
            for t in range(T)]
    out = concat(rows, axis=1)
    if not batched:
        out = reshape(out, (T, 2 * hidden))
    return out
