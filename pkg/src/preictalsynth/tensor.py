"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps an ndarray plus the recipe that produced it. Calling
backward() on a scalar loss walks the recorded graph once in reverse
topological order and accumulates gradients into leaf tensors.

Shape discipline is strict: every operation either returns its documented
output shape or raises ShapeError. There is no silent broadcasting. Most
operations accept a single sample (e.g. C x L) or the same shape with one
leading batch dimension (B x C x L); the batch dimension is carried through
unchanged.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording for cheap inference."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._vjp = None
        return out

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _result(data: np.ndarray, parents, vjp) -> Tensor:
    """Wrap an op output, recording the graph edge when grads are enabled."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    else:
        out.requires_grad = False
        out._parents = ()
        out._vjp = None
    return out


def backward(loss: Tensor, params=None) -> None:
    """Accumulate d(loss)/d(leaf) into each reachable leaf's .grad.

    loss must be scalar. Repeated calls without zero_grad() accumulate.
    If a ParamStore is given, parameters the graph never touched receive
    an explicit zero gradient so optimizer steps stay total.
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    # iterative depth-first topological order; graphs can exceed the
    # recursion limit (unrolled LSTMs)
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    flows = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(order):
        g = flows.pop(id(node), None)
        if g is None:
            continue
        if node._vjp is None:
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad = node.grad + g
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in flows:
                flows[key] = flows[key] + pg
            else:
                flows[key] = pg
    if params is not None:
        for _, t in params.items():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _result(a.data * s, (a,), lambda g: (g * s,))


def add_scalar(a: Tensor, s: float) -> Tensor:
    return _result(a.data + float(s), (a,), lambda g: (g,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    if np.any(ad <= 0.0):
        raise ValueError("log requires strictly positive values")
    return _result(np.log(ad), (a,), lambda g: (g / ad,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip values to [lo, hi]; gradient is 1 inside the band, 0 outside."""
    if not lo < hi:
        raise ValueError(f"clamp needs lo < hi, got [{lo}, {hi}]")
    ad = a.data
    mask = (ad >= lo) & (ad <= hi)
    return _result(np.clip(ad, lo, hi), (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    ad = a.data
    out = np.empty_like(ad)
    pos = ad >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-ad[pos]))
    ex = np.exp(ad[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    """x for x >= 0 else slope * x. Slope must lie in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu slope must be in (0, 1), got {slope}")
    ad = a.data
    factor = np.where(ad >= 0.0, 1.0, slope)
    return _result(ad * factor, (a,), lambda g: (g * factor,))


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape, dtype=np.int64)) != a.data.size:
        raise ShapeError(f"reshape: cannot view {a.data.shape} as {shape}")
    old = a.data.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def flatten(a: Tensor, keep_batch: bool = False) -> Tensor:
    if keep_batch:
        return reshape(a, (a.data.shape[0], a.data.size // a.data.shape[0]))
    return reshape(a, (a.data.size,))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of an empty sequence")
    ref = tensors[0].data.shape
    for t in tensors[1:]:
        s = t.data.shape
        if len(s) != len(ref) or s[:axis] + s[axis + 1:] != ref[:axis] + ref[axis + 1:]:
            raise ShapeError(f"concat: shapes {ref} and {s} differ off axis {axis}")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        return tuple(
            np.take(g, range(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(sizes))
        )

    return _result(data, tuple(tensors), vjp)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    n = a.data.shape[axis]
    if not (0 <= start < stop <= n):
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis {axis} of {a.data.shape}")
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    shape = a.data.shape

    def vjp(g):
        out = np.zeros(shape, dtype=np.float64)
        out[sl] = g
        return (out,)

    return _result(a.data[sl], (a,), vjp)


# ---------------------------------------------------------------------------
# reductions


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return _result(
        np.asarray(a.data.sum(), dtype=np.float64),
        (a,),
        lambda g: (np.full(shape, g, dtype=np.float64),),
    )


def mean_all(a: Tensor) -> Tensor:
    if a.data.size == 0:
        raise ShapeError("mean of an empty tensor")
    shape, n = a.data.shape, a.data.size
    return _result(
        np.asarray(a.data.mean(), dtype=np.float64),
        (a,),
        lambda g: (np.full(shape, g / n, dtype=np.float64),),
    )


# ---------------------------------------------------------------------------
# dense and convolution layers


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = W @ x (+ b). x is (N,) or (B, N); W is (M, N); b is (M,)."""
    if w.data.ndim != 2:
        raise ShapeError(f"dense: weights must be rank 2, got {w.data.shape}")
    m, n = w.data.shape
    xd = x.data
    if xd.ndim not in (1, 2) or xd.shape[-1] != n:
        raise ShapeError(f"dense: input {xd.shape} incompatible with weights {w.data.shape}")
    if b is not None and b.data.shape != (m,):
        raise ShapeError(f"dense: bias {b.data.shape} incompatible with weights {w.data.shape}")
    wd = w.data
    out = xd @ wd.T
    if b is not None:
        out = out + b.data

    if xd.ndim == 1:
        def vjp(g):
            gx = g @ wd
            gw = np.outer(g, xd)
            gb = g if b is not None else None
            return (gx, gw, gb) if b is not None else (gx, gw)
    else:
        def vjp(g):
            gx = g @ wd
            gw = g.T @ xd
            gb = g.sum(axis=0) if b is not None else None
            return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, vjp)


def _pad_amount(kernel: int, padding: str, length: int):
    if padding == "valid":
        if kernel > length:
            raise ShapeError(f"conv: kernel {kernel} exceeds input length {length}")
        return 0, 0
    if padding == "same":
        left = (kernel - 1) // 2
        return left, kernel - 1 - left
    raise ValueError(f"unknown padding mode {padding!r} (use 'same' or 'valid')")


def conv1d(x: Tensor, kernels: Tensor, padding: str = "valid",
           bias: Tensor | None = None) -> Tensor:
    """Cross-correlation along the last axis, stride 1.

    x: (C_in, L) or (B, C_in, L); kernels: (C_out, C_in, K);
    bias: (C_out,) optional. 'same' keeps L, 'valid' gives L - K + 1.
    """
    if kernels.data.ndim != 3:
        raise ShapeError(f"conv1d: kernels must be rank 3, got {kernels.data.shape}")
    batched = x.data.ndim == 3
    if not batched and x.data.ndim != 2:
        raise ShapeError(f"conv1d: input must be (C,L) or (B,C,L), got {x.data.shape}")
    xd = x.data if batched else x.data[None]
    B, cin, L = xd.shape
    cout, cin_k, K = kernels.data.shape
    if cin_k != cin:
        raise ShapeError(
            f"conv1d: input channels {xd.shape if batched else x.data.shape} "
            f"do not match kernels {kernels.data.shape}")
    if bias is not None and bias.data.shape != (cout,):
        raise ShapeError(f"conv1d: bias {bias.data.shape} incompatible with {kernels.data.shape}")
    pl, pr = _pad_amount(K, padding, L)
    if L + pl + pr < K:
        raise ShapeError(f"conv1d: kernel {K} exceeds padded length {L + pl + pr}")
    xp = np.pad(xd, ((0, 0), (0, 0), (pl, pr))) if (pl or pr) else xd
    lout = xp.shape[2] - K + 1
    win = sliding_window_view(xp, K, axis=2)           # B, Cin, Lout, K
    col = win.transpose(0, 2, 1, 3).reshape(B, lout, cin * K)
    w2 = kernels.data.reshape(cout, cin * K)
    y = col @ w2.T                                      # B, Lout, Cout
    if bias is not None:
        y = y + bias.data
    out = y.transpose(0, 2, 1)
    if not batched:
        out = out[0]

    kshape = kernels.data.shape

    def vjp(g):
        gb3 = g if batched else g[None]
        gt = gb3.transpose(0, 2, 1)                     # B, Lout, Cout
        gw = (gt.reshape(-1, cout).T @ col.reshape(-1, cin * K)).reshape(kshape)
        gcol = (gt @ w2).reshape(B, lout, cin, K)
        gxp = np.zeros((B, cin, L + pl + pr), dtype=np.float64)
        for kk in range(K):
            gxp[:, :, kk:kk + lout] += gcol[:, :, :, kk].transpose(0, 2, 1)
        gx = gxp[:, :, pl:pl + L]
        if not batched:
            gx = gx[0]
        if bias is not None:
            return gx, gw, gb3.sum(axis=(0, 2))
        return gx, gw

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return _result(out, parents, vjp)


def conv2d(x: Tensor, kernels: Tensor, padding: str = "same",
           bias: Tensor | None = None) -> Tensor:
    """2-D cross-correlation. x: (C,H,W) or (B,C,H,W); kernels: (O,C,KH,KW)."""
    if kernels.data.ndim != 4:
        raise ShapeError(f"conv2d: kernels must be rank 4, got {kernels.data.shape}")
    batched = x.data.ndim == 4
    if not batched and x.data.ndim != 3:
        raise ShapeError(f"conv2d: input must be (C,H,W) or (B,C,H,W), got {x.data.shape}")
    xd = x.data if batched else x.data[None]
    B, cin, H, W = xd.shape
    cout, cin_k, KH, KW = kernels.data.shape
    if cin_k != cin:
        raise ShapeError(f"conv2d: input channels {xd.shape} do not match kernels {kernels.data.shape}")
    if bias is not None and bias.data.shape != (cout,):
        raise ShapeError(f"conv2d: bias {bias.data.shape} incompatible with {kernels.data.shape}")
    ph = _pad_amount(KH, padding, H)
    pw = _pad_amount(KW, padding, W)
    xp = np.pad(xd, ((0, 0), (0, 0), ph, pw)) if any(ph + pw) else xd
    hout = xp.shape[2] - KH + 1
    wout = xp.shape[3] - KW + 1
    if hout < 1 or wout < 1:
        raise ShapeError(f"conv2d: kernels {kernels.data.shape} exceed padded input {xp.shape}")
    win = sliding_window_view(xp, (KH, KW), axis=(2, 3))   # B,C,hout,wout,KH,KW
    col = win.transpose(0, 2, 3, 1, 4, 5).reshape(B, hout * wout, cin * KH * KW)
    w2 = kernels.data.reshape(cout, cin * KH * KW)
    y = col @ w2.T                                          # B, hout*wout, Cout
    if bias is not None:
        y = y + bias.data
    out = y.transpose(0, 2, 1).reshape(B, cout, hout, wout)
    if not batched:
        out = out[0]

    kshape = kernels.data.shape

    def vjp(g):
        gb4 = g if batched else g[None]
        gt = gb4.reshape(B, cout, hout * wout).transpose(0, 2, 1)
        gw = (gt.reshape(-1, cout).T @ col.reshape(-1, cin * KH * KW)).reshape(kshape)
        gcol = (gt @ w2).reshape(B, hout, wout, cin, KH, KW)
        gxp = np.zeros((B, cin, H + ph[0] + ph[1], W + pw[0] + pw[1]), dtype=np.float64)
        for kh in range(KH):
            for kw in range(KW):
                gxp[:, :, kh:kh + hout, kw:kw + wout] += \
                    gcol[:, :, :, :, kh, kw].transpose(0, 3, 1, 2)
        gx = gxp[:, :, ph[0]:ph[0] + H, pw[0]:pw[0] + W]
        if not batched:
            gx = gx[0]
        if bias is not None:
            return gx, gw, gb4.sum(axis=(0, 2, 3))
        return gx, gw

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return _result(out, parents, vjp)


def maxpool1d(x: Tensor, width: int = 2) -> Tensor:
    """Non-overlapping max pooling along the last axis; stride equals width.

    Trailing samples that do not fill a window are dropped. Ties route the
    gradient to the lowest index in the window.
    """
    if width < 1:
        raise ValueError(f"maxpool1d width must be >= 1, got {width}")
    batched = x.data.ndim == 3
    if not batched and x.data.ndim != 2:
        raise ShapeError(f"maxpool1d: input must be (C,L) or (B,C,L), got {x.data.shape}")
    xd = x.data if batched else x.data[None]
    B, C, L = xd.shape
    if L < width:
        raise ShapeError(f"maxpool1d: length {L} shorter than window {width}")
    n = L // width
    v = xd[:, :, :n * width].reshape(B, C, n, width)
    idx = v.argmax(axis=3)                                 # first max wins ties
    out = np.take_along_axis(v, idx[..., None], axis=3)[..., 0]
    if not batched:
        out = out[0]

    def vjp(g):
        g3 = g if batched else g[None]
        gv = np.zeros((B, C, n, width), dtype=np.float64)
        np.put_along_axis(gv, idx[..., None], g3[..., None], axis=3)
        gx = np.zeros((B, C, L), dtype=np.float64)
        gx[:, :, :n * width] = gv.reshape(B, C, n * width)
        return (gx if batched else gx[0],)

    return _result(out, (x,), vjp)


def maxpool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping size x size max pooling over the last two axes."""
    if size < 1:
        raise ValueError(f"maxpool2d size must be >= 1, got {size}")
    batched = x.data.ndim == 4
    if not batched and x.data.ndim != 3:
        raise ShapeError(f"maxpool2d: input must be (C,H,W) or (B,C,H,W), got {x.data.shape}")
    xd = x.data if batched else x.data[None]
    B, C, H, W = xd.shape
    if H < size or W < size:
        raise ShapeError(f"maxpool2d: input {xd.shape[1:]} smaller than window {size}")
    nh, nw = H // size, W // size
    v = xd[:, :, :nh * size, :nw * size] \
        .reshape(B, C, nh, size, nw, size).transpose(0, 1, 2, 4, 3, 5) \
        .reshape(B, C, nh, nw, size * size)
    idx = v.argmax(axis=4)
    out = np.take_along_axis(v, idx[..., None], axis=4)[..., 0]
    if not batched:
        out = out[0]

    def vjp(g):
        g4 = g if batched else g[None]
        gv = np.zeros((B, C, nh, nw, size * size), dtype=np.float64)
        np.put_along_axis(gv, idx[..., None], g4[..., None], axis=4)
        gx = np.zeros((B, C, H, W), dtype=np.float64)
        gx[:, :, :nh * size, :nw * size] = gv \
            .reshape(B, C, nh, nw, size, size).transpose(0, 1, 2, 4, 3, 5) \
            .reshape(B, C, nh * size, nw * size)
        return (gx if batched else gx[0],)

    return _result(out, (x,), vjp)


def upsample1d(x: Tensor, factor: int, method: str = "nearest") -> Tensor:
    """Stretch the last axis by an integer factor.

    nearest repeats each sample; linear interpolates between neighbours and
    holds the final sample at the right edge.
    """
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"upsample1d factor must be a positive integer, got {factor}")
    if method not in ("nearest", "linear"):
        raise ValueError(f"unknown upsample method {method!r}")
    batched = x.data.ndim == 3
    if not batched and x.data.ndim != 2:
        raise ShapeError(f"upsample1d: input must be (C,L) or (B,C,L), got {x.data.shape}")
    xd = x.data if batched else x.data[None]
    B, C, L = xd.shape
    factor = int(factor)

    if method == "nearest":
        out = np.repeat(xd, factor, axis=2)

        def vjp(g):
            g3 = g if batched else g[None]
            gx = g3.reshape(B, C, L, factor).sum(axis=3)
            return (gx if batched else gx[0],)
    else:
        pos = np.arange(L * factor, dtype=np.float64) / factor
        i0 = np.floor(pos).astype(np.intp)
        i1 = np.minimum(i0 + 1, L - 1)
        w1 = pos - i0
        w0 = 1.0 - w1
        out = xd[:, :, i0] * w0 + xd[:, :, i1] * w1

        def vjp(g):
            g3 = g if batched else g[None]
            gx = np.zeros((B, C, L), dtype=np.float64)
            np.add.at(gx, (slice(None), slice(None), i0), g3 * w0)
            np.add.at(gx, (slice(None), slice(None), i1), g3 * w1)
            return (gx if batched else gx[0],)

    if not batched:
        out = out[0]
    return _result(out, (x,), vjp)
