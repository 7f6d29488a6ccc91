"""A small reverse-mode differentiation engine over numpy arrays.

Every differentiable op builds a node holding its parents and a closure that
maps the output gradient to parent gradients. Graph bookkeeping is skipped
entirely when no input requires a gradient, so inference pays nothing.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InputError, UsageError


class Tensor:
    """n-dimensional real array that can take part in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (),
                 _backward: Callable | None = None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self):
        return tsum(self)

    def mean(self):
        return mean(self)

    def abs(self):
        return tabs(self)

    def backward(self):
        backward(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    """Promote plain numbers to tensors of the other operand's dtype."""
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, as_tensor(b, a.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return as_tensor(a, b.dtype), b
    return as_tensor(a), as_tensor(b)


def _node(data, parents: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap an op result, recording the graph edge only when needed."""
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward_fn)
    return Tensor(data)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> list[np.ndarray] | None:
    """Populate ``.grad`` on every tensor reachable from the scalar ``loss``.

    When ``params`` is given, returns their gradients in order, with zeros
    for any parameter the loss does not depend on.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward needs a scalar loss, got shape {loss.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    if loss.requires_grad:
        loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if params is None:
        return None
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


# elementwise ----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))
    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))
    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))
    return _node(a.data * b.data, (a, b), bw)


def tabs(x: Tensor) -> Tensor:
    """Absolute value; the subgradient at 0 is taken as 0."""
    sign = np.sign(x.data)
    return _node(np.abs(x.data), (x,), lambda g: _accumulate(x, g * sign))


def relu(x: Tensor) -> Tensor:
    keep = x.data > 0
    return _node(np.maximum(x.data, 0), (x,), lambda g: _accumulate(x, g * keep))


def log1p(x: Tensor) -> Tensor:
    return _node(np.log1p(x.data), (x,), lambda g: _accumulate(x, g / (1.0 + x.data)))


SIGMOID_CLIP = 15.0


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function with logits clipped to +-15.

    The clip keeps outputs strictly inside (0, 1) even in float32; the
    gradient is zero beyond it.
    """
    z = np.clip(x.data, -SIGMOID_CLIP, SIGMOID_CLIP)
    s = (1.0 / (1.0 + np.exp(-z))).astype(x.dtype)
    inside = np.abs(x.data) <= SIGMOID_CLIP
    return _node(s, (x,), lambda g: _accumulate(x, g * s * (1 - s) * inside))


def tsum(x: Tensor) -> Tensor:
    return _node(np.sum(x.data), (x,), lambda g: _accumulate(x, np.broadcast_to(g, x.shape)))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    out = np.sum(x.data) / n
    return _node(np.asarray(out, dtype=x.dtype), (x,),
                 lambda g: _accumulate(x, np.broadcast_to(g / n, x.shape)))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, part in zip(tensors, np.split(g, bounds, axis=axis)):
            _accumulate(t, part)
    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def dropout(x: Tensor, rate: float, mask: np.ndarray | None = None,
            rng: np.random.Generator | None = None) -> tuple[Tensor, np.ndarray]:
    """Inverted dropout. Returns the output and the scaling mask that was used.

    Pass ``mask`` to replay a previous draw exactly.
    """
    if mask is None:
        if rng is None:
            raise UsageError("dropout needs either a mask or a random generator")
        keep = rng.random(x.shape) >= rate
        mask = (keep / (1.0 - rate)).astype(x.dtype)
    elif mask.shape != x.shape:
        raise InputError(f"dropout mask shape {mask.shape} != input shape {x.shape}")
    return _node(x.data * mask, (x,), lambda g: _accumulate(x, g * mask)), mask


# spatial ops, NHWC layout -----------------------------------------------------

def _same_padding(size: int, k: int, stride: int) -> tuple[int, int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return out, total // 2, total - total // 2


def _channel_sum(a: np.ndarray) -> np.ndarray:
    """Sum over every axis but the last (a BLAS matvec beats ufunc.reduce here)."""
    flat = a.reshape(-1, a.shape[-1])
    return np.ones(flat.shape[0], dtype=a.dtype) @ flat


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """2-D cross-correlation with TensorFlow-style "same" zero padding.

    ``x`` is [N, H, W, Cin], ``kernel`` is [kh, kw, Cin, Cout].
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise InputError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}")
    n, h, w, cin = x.shape
    kh, kw, kcin, cout = kernel.shape
    if kcin != cin:
        raise InputError(f"kernel expects {kcin} input channels, input has {cin}")
    if bias is not None and bias.shape != (cout,):
        raise InputError(f"bias shape {bias.shape} != ({cout},)")
    ho, pt, pb = _same_padding(h, kh, stride)
    wo, pl, pr = _same_padding(w, kw, stride)
    xp = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr), (0, 0))) if (pt or pb or pl or pr) else x.data
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    offsets = [(i, j) for i in range(kh) for j in range(kw)]
    if kh == kw == 1:
        cols = xp[:, :hs:stride, :ws:stride, :].reshape(-1, cin)
    else:
        # im2col: [N*Ho*Wo, kh*kw*Cin], matching kernel.reshape(kh*kw*Cin, Cout)
        cols = np.concatenate([xp[:, i:i + hs:stride, j:j + ws:stride, :] for i, j in offsets],
                              axis=-1).reshape(-1, kh * kw * cin)
    kmat = kernel.data.reshape(kh * kw * cin, cout)
    out = cols @ kmat
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, cout)
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def bw(g):
        g2 = g.reshape(-1, cout)
        if x.requires_grad:
            gcols = (g2 @ kmat.T).reshape(n, ho, wo, kh * kw, cin)
            gxp = np.zeros(xp.shape, dtype=x.dtype)
            for k, (i, j) in enumerate(offsets):
                gxp[:, i:i + hs:stride, j:j + ws:stride, :] += gcols[:, :, :, k, :]
            _accumulate(x, gxp[:, pt:pt + h, pl:pl + w, :])
        if kernel.requires_grad:
            _accumulate(kernel, (cols.T @ g2).reshape(kernel.shape))
        if bias is not None and bias.requires_grad:
            _accumulate(bias, _channel_sum(g))
    return _node(out, parents, bw)


def conv_transpose2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Transposed convolution whose stride equals its kernel size (no overlap).

    ``kernel`` is [k, k, Cin, Cout]; the output is k times larger spatially.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    n, h, w, cin = x.shape
    kh, kw, kcin, cout = kernel.shape
    if kcin != cin:
        raise InputError(f"kernel expects {kcin} input channels, input has {cin}")
    # [N*H*W, Cin] @ [Cin, kh*kw*Cout]
    kmat = kernel.data.transpose(2, 0, 1, 3).reshape(cin, kh * kw * cout)
    y = (x.data.reshape(-1, cin) @ kmat).reshape(n, h, w, kh, kw, cout)
    out = y.transpose(0, 1, 3, 2, 4, 5).reshape(n, h * kh, w * kw, cout)
    if bias is not None:
        out = out + bias.data
    parents = (x, kernel) if bias is None else (x, kernel, bias)

    def bw(g):
        gy = g.reshape(n, h, kh, w, kw, cout).transpose(0, 1, 3, 2, 4, 5).reshape(-1, kh * kw * cout)
        if x.requires_grad:
            _accumulate(x, (gy @ kmat.T).reshape(n, h, w, cin))
        if kernel.requires_grad:
            gk = (x.data.reshape(-1, cin).T @ gy).reshape(cin, kh, kw, cout).transpose(1, 2, 0, 3)
            _accumulate(kernel, gk)
        if bias is not None and bias.requires_grad:
            _accumulate(bias, _channel_sum(g))
    return _node(out, parents, bw)


def max_pool2d(x: Tensor, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; ties route the gradient to the first maximum."""
    n, h, w, c = x.shape
    if h % size or w % size:
        raise InputError(f"spatial extent {(h, w)} not divisible by pool size {size}")
    blocks = x.data.reshape(n, h // size, size, w // size, size, c).transpose(0, 1, 3, 5, 2, 4)
    blocks = blocks.reshape(n, h // size, w // size, c, size * size)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gb = np.zeros(blocks.shape, dtype=x.dtype)
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, h // size, w // size, c, size, size).transpose(0, 1, 4, 2, 5, 3)
        _accumulate(x, gb.reshape(n, h, w, c))
    return _node(out, (x,), bw)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    n, h, w, c = x.shape
    out = np.repeat(np.repeat(x.data, factor, axis=1), factor, axis=2)

    def bw(g):
        _accumulate(x, g.reshape(n, h, factor, w, factor, c).sum(axis=(2, 4)))
    return _node(out, (x,), bw)


def batch_norm(x: Tensor, gain: Tensor, shift: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.9,
               eps: float = 1e-5) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Per-channel batch normalization over the N, H, W axes.

    Returns ``(output, new_running_mean, new_running_var)``. In eval mode the
    running statistics are used and returned unchanged.
    """
    x, gain, shift = as_tensor(x), as_tensor(gain), as_tensor(shift)
    c = x.shape[-1]
    if gain.shape != (c,) or shift.shape != (c,) or running_mean.shape != (c,) or running_var.shape != (c,):
        raise InputError(f"batch-norm parameters must have shape ({c},)")
    if x.data.size == 0:
        raise InputError("batch_norm on an empty batch")
    if not training:
        inv = (1.0 / np.sqrt(running_var + eps)).astype(x.dtype)
        xhat = (x.data - running_mean.astype(x.dtype)) * inv
        out = xhat * gain.data + shift.data

        def bw_eval(g):
            if x.requires_grad:
                _accumulate(x, g * gain.data * inv)
            if gain.requires_grad:
                _accumulate(gain, _channel_sum(g * xhat))
            if shift.requires_grad:
                _accumulate(shift, _channel_sum(g))
        return _node(out, (x, gain, shift), bw_eval), running_mean, running_var

    m = x.data.size // c
    mu = _channel_sum(x.data) / m
    centered = x.data - mu
    var = _channel_sum(centered * centered) / m
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gain.data + shift.data

    def bw(g):
        g_xhat = _channel_sum(g * xhat)
        g_sum = _channel_sum(g)
        if gain.requires_grad:
            _accumulate(gain, g_xhat)
        if shift.requires_grad:
            _accumulate(shift, g_sum)
        if x.requires_grad:
            scale = gain.data * inv / m
            _accumulate(x, scale * (m * g - g_sum - xhat * g_xhat))
    new_mean = momentum * running_mean + (1.0 - momentum) * mu
    new_var = momentum * running_var + (1.0 - momentum) * var
    return (_node(out.astype(x.dtype, copy=False), (x, gain, shift), bw),
            new_mean.astype(running_mean.dtype), new_var.astype(running_var.dtype))
