"""Reverse-mode automatic differentiation over numpy arrays.

Covers exactly the primitives the models here need: dense/conv/conv-transpose
layers, pointwise nonlinearities, reductions, softmax/logsumexp, dropout with
an externally supplied mask, embedding lookup, conditional instance norm, and
a 4-gate LSTM cell.  Tensors record their parents and a backprop closure;
backward() walks the graph once in reverse topological order.

Convolutions use SAME padding with TensorFlow semantics: the output spatial
size is ceil(in / stride) and odd padding goes to the bottom/right.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeMismatch(ValueError):
    pass


class NonFinite(FloatingPointError):
    pass


class NotScalar(ValueError):
    pass


class GraphConsumed(RuntimeError):
    pass


class LabelOutOfRange(ValueError):
    pass


_grad_enabled = True
_finite_checks = True


@contextmanager
def no_grad():
    """Build no graph inside the block (inference / sampling)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextmanager
def finite_checks(enabled: bool):
    global _finite_checks
    prev = _finite_checks
    _finite_checks = enabled
    try:
        yield
    finally:
        _finite_checks = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backprop", "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        if _finite_checks and not np.all(np.isfinite(arr)):
            raise NonFinite("tensor created with NaN/Inf entries")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backprop = None
        self._consumed = False

    # -- introspection ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- operators ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def backward(self):
        backward(self)


def _as_tensor(x, like: "Tensor | None" = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if np.isscalar(x):
        # scalar constants adopt the partner operand's dtype so float64
        # graphs stay float64 and float32 graphs are not upcast
        dtype = like.data.dtype if like is not None else DEFAULT_DTYPE
        return Tensor(np.asarray(x, dtype=dtype))
    return Tensor(np.asarray(x))


def _as_pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _as_tensor(b, like=a)
    if isinstance(b, Tensor):
        return _as_tensor(a, like=b), b
    return _as_tensor(a), _as_tensor(b)


def _check_finite(arr: np.ndarray, op: str) -> None:
    if _finite_checks and not np.all(np.isfinite(arr)):
        raise NonFinite(f"{op} produced NaN/Inf")


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backprop, op: str) -> Tensor:
    _check_finite(data, op)
    rg = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = rg
    out.grad = None
    out._consumed = False
    if rg:
        out._parents = parents
        out._backprop = backprop
    else:
        out._parents = ()
        out._backprop = None
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g.astype(t.data.dtype, copy=False)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # reduce a broadcast gradient back to the operand's shape
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = _as_pair(a, b)
    data = a.data + b.data

    def backprop(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.shape))

    return _make(data, (a, b), backprop, "add")


def sub(a, b) -> Tensor:
    a, b = _as_pair(a, b)
    data = a.data - b.data

    def backprop(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.shape))

    return _make(data, (a, b), backprop, "sub")


def mul(a, b) -> Tensor:
    a, b = _as_pair(a, b)
    data = a.data * b.data

    def backprop(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backprop, "mul")


def div(a, b) -> Tensor:
    a, b = _as_pair(a, b)
    data = a.data / b.data

    def backprop(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(data, (a, b), backprop, "div")


def neg(a) -> Tensor:
    a = _as_tensor(a)

    def backprop(g):
        if a.requires_grad:
            _accum(a, -g)

    return _make(-a.data, (a,), backprop, "neg")


def matmul(a, b) -> Tensor:
    a, b = _as_pair(a, b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backprop(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _make(data, (a, b), backprop, "matmul")


# ---------------------------------------------------------------------------
# shape ops


def concat(tensors, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backprop(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accum(t, g[tuple(idx)])

    return _make(data, tuple(ts), backprop, "concat")


def slice_(a, idx) -> Tensor:
    a = _as_tensor(a)
    data = a.data[idx]

    def backprop(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            buf[idx] = g
            _accum(a, buf)

    return _make(np.ascontiguousarray(data), (a,), backprop, "slice")


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    data = a.data.reshape(shape)

    def backprop(g):
        if a.requires_grad:
            _accum(a, g.reshape(a.shape))

    return _make(data, (a,), backprop, "reshape")


# ---------------------------------------------------------------------------
# pointwise


def relu(a) -> Tensor:
    a = _as_tensor(a)
    data = np.maximum(a.data, 0)

    def backprop(g):
        if a.requires_grad:
            _accum(a, g * (a.data > 0))

    return _make(data, (a,), backprop, "relu")


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    data = 1.0 / (1.0 + np.exp(-np.clip(a.data, -60, 60)))

    def backprop(g):
        if a.requires_grad:
            _accum(a, g * data * (1.0 - data))

    return _make(data, (a,), backprop, "sigmoid")


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def backprop(g):
        if a.requires_grad:
            _accum(a, g * (1.0 - data * data))

    return _make(data, (a,), backprop, "tanh")


def exp(a) -> Tensor:
    a = _as_tensor(a)
    data = np.exp(a.data)

    def backprop(g):
        if a.requires_grad:
            _accum(a, g * data)

    return _make(data, (a,), backprop, "exp")


def log(a) -> Tensor:
    a = _as_tensor(a)
    data = np.log(a.data)

    def backprop(g):
        if a.requires_grad:
            _accum(a, g / a.data)

    return _make(data, (a,), backprop, "log")


def power(a, p: float) -> Tensor:
    a = _as_tensor(a)
    data = np.power(a.data, p)

    def backprop(g):
        if a.requires_grad:
            _accum(a, g * p * np.power(a.data, p - 1.0))

    return _make(data, (a,), backprop, "power")


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes only strictly inside the range."""
    a = _as_tensor(a)
    data = np.clip(a.data, lo, hi)

    def backprop(g):
        if a.requires_grad:
            _accum(a, g * ((a.data > lo) & (a.data < hi)))

    return _make(data, (a,), backprop, "clip")


def maximum(a, b) -> Tensor:
    a, b = _as_pair(a, b)
    data = np.maximum(a.data, b.data)

    def backprop(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * (a.data >= b.data), a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * (a.data < b.data), b.shape))

    return _make(data, (a, b), backprop, "maximum")


# ---------------------------------------------------------------------------
# reductions / normalizers


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backprop(g):
        if not a.requires_grad:
            return
        if axis is None:
            _accum(a, np.broadcast_to(g, a.shape))
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))

    return _make(np.asarray(data), (a,), backprop, "reduce_sum")


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(reduce_sum(a, axis, keepdims), 1.0 / float(count))


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backprop(g):
        if a.requires_grad:
            dot = (g * data).sum(axis=axis, keepdims=True)
            _accum(a, data * (g - dot))

    return _make(data, (a,), backprop, "softmax")


def logsumexp(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    full = m + np.log(s)
    data = full if keepdims else np.squeeze(full, axis=axis)

    def backprop(g):
        if a.requires_grad:
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, g * (e / s))

    return _make(data, (a,), backprop, "logsumexp")


# ---------------------------------------------------------------------------
# structured ops


def dropout(a, keep_p: float, mask: np.ndarray) -> Tensor:
    """Inverted dropout with a caller-supplied binary mask."""
    a = _as_tensor(a)
    if not 0.0 < keep_p <= 1.0:
        raise ValueError(f"keep_p must be in (0, 1], got {keep_p}")
    scale = np.asarray(mask, dtype=a.data.dtype) / keep_p
    data = a.data * scale

    def backprop(g):
        if a.requires_grad:
            _accum(a, g * scale)

    return _make(data, (a,), backprop, "dropout")


def make_dropout_mask(rng: np.random.Generator, shape, keep_p: float) -> np.ndarray:
    return (rng.random(shape) < keep_p).astype(DEFAULT_DTYPE)


def embedding_lookup(table, indices) -> Tensor:
    table = _as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= table.shape[0]):
        raise LabelOutOfRange(f"indices outside 0..{table.shape[0] - 1}")
    data = table.data[idx]

    def backprop(g):
        if table.requires_grad:
            buf = np.zeros_like(table.data)
            np.add.at(buf, idx, g)
            _accum(table, buf)

    return _make(data, (table,), backprop, "embedding_lookup")


# ---------------------------------------------------------------------------
# convolutions (NHWC, kernels square, SAME padding)


def _same_pads(n: int, k: int, s: int) -> tuple[int, int, int]:
    out = -(-n // s)  # ceil
    total = max((out - 1) * s + k - n, 0)
    lo = total // 2
    return out, lo, total - lo


def _conv_forward(x: np.ndarray, k: np.ndarray, s: int) -> np.ndarray:
    n, h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    ho, pt, pb = _same_pads(h, kh, s)
    wo, pl, pr = _same_pads(w, kw, s)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    out = np.zeros((n, ho, wo, cout), dtype=np.result_type(x, k))
    for di in range(kh):
        for dj in range(kw):
            sl = xp[:, di : di + (ho - 1) * s + 1 : s, dj : dj + (wo - 1) * s + 1 : s, :]
            out += (sl.reshape(-1, cin) @ k[di, dj]).reshape(n, ho, wo, cout)
    return out


def _conv_dx(dout: np.ndarray, k: np.ndarray, s: int, x_shape) -> np.ndarray:
    n, h, w, cin = x_shape
    kh, kw, _, cout = k.shape
    ho, pt, pb = _same_pads(h, kh, s)
    wo, pl, pr = _same_pads(w, kw, s)
    dxp = np.zeros((n, h + pt + pb, w + pl + pr, cin), dtype=np.result_type(dout, k))
    flat = dout.reshape(-1, cout)
    for di in range(kh):
        for dj in range(kw):
            dsl = (flat @ k[di, dj].T).reshape(n, ho, wo, cin)
            dxp[:, di : di + (ho - 1) * s + 1 : s, dj : dj + (wo - 1) * s + 1 : s, :] += dsl
    return dxp[:, pt : pt + h, pl : pl + w, :]


def _conv_dk(dout: np.ndarray, x: np.ndarray, s: int, k_shape) -> np.ndarray:
    n, h, w, cin = x.shape
    kh, kw, _, cout = k_shape
    ho, pt, pb = _same_pads(h, kh, s)
    wo, pl, pr = _same_pads(w, kw, s)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    dk = np.zeros(k_shape, dtype=np.result_type(dout, x))
    flat = dout.reshape(-1, cout)
    for di in range(kh):
        for dj in range(kw):
            sl = xp[:, di : di + (ho - 1) * s + 1 : s, dj : dj + (wo - 1) * s + 1 : s, :]
            dk[di, dj] = sl.reshape(-1, cin).T @ flat
    return dk


def conv2d(x, kernel, stride: int = 1) -> Tensor:
    """NHWC convolution; kernel (kh, kw, c_in, c_out); SAME padding."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[3] != kernel.shape[2]:
        raise ShapeMismatch(f"conv2d: input {x.shape}, kernel {kernel.shape}")
    if kernel.shape[0] != kernel.shape[1]:
        raise ShapeMismatch(f"conv2d kernels must be square, got {kernel.shape}")
    data = _conv_forward(x.data, kernel.data, stride)

    def backprop(g):
        if x.requires_grad:
            _accum(x, _conv_dx(g, kernel.data, stride, x.shape))
        if kernel.requires_grad:
            _accum(kernel, _conv_dk(g, x.data, stride, kernel.shape))

    return _make(data, (x, kernel), backprop, "conv2d")


def conv_transpose2d(x, kernel, stride: int = 1) -> Tensor:
    """Adjoint of conv2d: NHWC input, kernel (kh, kw, c_out, c_in); the
    output spatial size is in × stride (SAME)."""
    x, kernel = _as_tensor(x), _as_tensor(kernel)
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[3] != kernel.shape[3]:
        raise ShapeMismatch(f"conv_transpose2d: input {x.shape}, kernel {kernel.shape}")
    if kernel.shape[0] != kernel.shape[1]:
        raise ShapeMismatch(f"conv_transpose2d kernels must be square, got {kernel.shape}")
    n, h, w, _ = x.shape
    cout = kernel.shape[2]
    big = (n, h * stride, w * stride, cout)
    # forward pass is the input-gradient of the mirrored convolution
    data = _conv_dx(x.data, kernel.data, stride, big)

    def backprop(g):
        if x.requires_grad:
            _accum(x, _conv_forward(g, kernel.data, stride))
        if kernel.requires_grad:
            _accum(kernel, _conv_dk(x.data, g, stride, kernel.shape))

    return _make(data, (x, kernel), backprop, "conv_transpose2d")


# ---------------------------------------------------------------------------
# model building blocks


def cond_instance_norm(x, labels, scales, shifts, eps: float = 1e-5) -> Tensor:
    """Instance normalization over H, W with a per-class affine transform.

    x: (N, H, W, C); labels: (N,) ints; scales/shifts: (num_classes, C).
    """
    x = _as_tensor(x)
    if x.ndim != 4:
        raise ShapeMismatch(f"cond_instance_norm expects NHWC, got {x.shape}")
    mean = reduce_mean(x, axis=(1, 2), keepdims=True)
    centered = sub(x, mean)
    var = reduce_mean(mul(centered, centered), axis=(1, 2), keepdims=True)
    inv = power(add(var, eps), -0.5)
    normed = mul(centered, inv)
    n = x.shape[0]
    gamma = reshape(embedding_lookup(scales, labels), (n, 1, 1, -1))
    beta = reshape(embedding_lookup(shifts, labels), (n, 1, 1, -1))
    return add(mul(normed, gamma), beta)


def lstm_cell(x, h, c, w, b) -> tuple[Tensor, Tensor]:
    """Single 4-gate LSTM step.

    x: (N, in), h/c: (N, hidden), w: (in+hidden, 4*hidden), b: (4*hidden,).
    Gate order along the last axis: input, forget, candidate, output.
    """
    x, h, c = _as_tensor(x), _as_tensor(h), _as_tensor(c)
    hidden = h.shape[1]
    if w.shape != (x.shape[1] + hidden, 4 * hidden):
        raise ShapeMismatch(f"lstm weights {w.shape} vs input {x.shape} hidden {h.shape}")
    z = add(matmul(concat([x, h], axis=1), w), b)
    i = sigmoid(slice_(z, (slice(None), slice(0, hidden))))
    f = sigmoid(slice_(z, (slice(None), slice(hidden, 2 * hidden))))
    g = tanh(slice_(z, (slice(None), slice(2 * hidden, 3 * hidden))))
    o = sigmoid(slice_(z, (slice(None), slice(3 * hidden, 4 * hidden))))
    c_new = add(mul(f, c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def lstm_param_count(in_dim: int, hidden: int) -> int:
    return 4 * ((in_dim + hidden) * hidden + hidden)


# ---------------------------------------------------------------------------
# backward driver


def backward(loss: Tensor) -> None:
    if loss.data.size != 1:
        raise NotScalar(f"backward needs a scalar, got shape {loss.shape}")
    if loss._consumed:
        raise GraphConsumed("backward already ran on this graph")
    loss._consumed = True

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backprop is not None and node.grad is not None:
            node._backprop(node.grad)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# initialization and optimization


def he_init(shape, fan_in: int, rng: np.random.Generator, dtype=None) -> Tensor:
    """Zero-mean normal with std sqrt(2 / fan_in)."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    std = math.sqrt(2.0 / fan_in)
    data = rng.normal(0.0, std, size=shape).astype(dtype or DEFAULT_DTYPE)
    return Tensor(data, requires_grad=True)


@dataclass
class Adam:
    """Adam with bias correction; epsilon sits outside the square root."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    t: int = 0
    slots: dict = field(default_factory=dict)

    def step(self, params: dict[str, Tensor]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in params.items():
            if p.grad is None:
                continue
            if name in self.slots:
                m, v = self.slots[name]
                if m.shape != p.shape:
                    raise ShapeMismatch(f"adam slot {name}: {m.shape} vs {p.shape}")
            else:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            g = p.grad
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self.slots[name] = (m, v)
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
