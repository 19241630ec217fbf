"""Minimal reverse-mode autodiff over numpy arrays.

Every op records its parents and a backward closure on a dynamic tape.
``Tensor.backward`` walks the tape in reverse topological order.  Arrays are
float32 unless the caller asks otherwise; ops keep the dtype of their inputs,
which lets gradient checks run the same graph in float64.
"""
from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_GRAD_ENABLED = True


class ShapeError(ValueError):
    """Operands of an op have incompatible shapes."""


class NumericError(ArithmeticError):
    """An op produced NaN or Inf."""


class NoGradientError(RuntimeError):
    """Backward reached an op that has no registered gradient."""


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            else:
                dtype = DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = "leaf"

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- backward ---------------------------------------------------------
    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeError(f"backward: root must be a scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if not node._parents or node.grad is None:
                continue
            if node._backward is None:
                raise NoGradientError(f"{node.op}: no gradient registered for this op")
            node._backward(node.grad)

    # -- operator sugar ---------------------------------------------------
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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def as_tensor(x, dtype=None) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _scalar_or_tensor(x):
    if isinstance(x, Tensor):
        return x
    if np.isscalar(x):
        return float(x)
    return Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = _unbroadcast(g, t.shape).astype(t.dtype, copy=False)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g


def _make(data: np.ndarray, parents: Sequence, backward, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NumericError(f"{op}: produced non-finite values")
    out = Tensor(data, dtype=data.dtype if data.dtype in (np.float32, np.float64) else None)
    tparents = tuple(p for p in parents if isinstance(p, Tensor))
    out.op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in tparents):
        out.requires_grad = True
        out._parents = tparents
        out._backward = backward
    return out


def _data(x):
    return x.data if isinstance(x, Tensor) else x


def _binary(op: str, a, b, fn):
    try:
        return fn(_data(a), _data(b))
    except ValueError as exc:
        sa = a.shape if isinstance(a, Tensor) else np.shape(a)
        sb = b.shape if isinstance(b, Tensor) else np.shape(b)
        raise ShapeError(f"{op}: incompatible shapes {sa} and {sb}") from exc


# -- elementwise arithmetic ----------------------------------------------

def add(a, b) -> Tensor:
    a, b = _scalar_or_tensor(a), _scalar_or_tensor(b)
    out_data = _binary("add", a, b, np.add)

    def backward(g):
        for x in (a, b):
            if isinstance(x, Tensor):
                _accum(x, g)

    return _make(out_data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _scalar_or_tensor(a), _scalar_or_tensor(b)
    out_data = _binary("sub", a, b, np.subtract)

    def backward(g):
        if isinstance(a, Tensor):
            _accum(a, g)
        if isinstance(b, Tensor):
            _accum(b, -g)

    return _make(out_data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = _scalar_or_tensor(a), _scalar_or_tensor(b)
    out_data = _binary("mul", a, b, np.multiply)

    def backward(g):
        if isinstance(a, Tensor):
            _accum(a, g * _data(b))
        if isinstance(b, Tensor):
            _accum(b, g * _data(a))

    return _make(out_data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _scalar_or_tensor(a), _scalar_or_tensor(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = _binary("div", a, b, np.divide)

    def backward(g):
        bd = _data(b)
        if isinstance(a, Tensor):
            _accum(a, g / bd)
        if isinstance(b, Tensor):
            _accum(b, -g * _data(a) / (bd * bd))

    return _make(out_data, (a, b), backward, "div")


def power(a: Tensor, exponent: float) -> Tensor:
    out_data = a.data ** exponent

    def backward(g):
        _accum(a, g * exponent * a.data ** (exponent - 1))

    return _make(out_data, (a,), backward, f"pow{exponent:g}")


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        _accum(a, g * out_data)

    return _make(out_data, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out_data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _make(out_data, (a,), backward, "log")


def sqrt(a: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out_data = np.sqrt(a.data)

    def backward(g):
        _accum(a, g * 0.5 / out_data)

    return _make(out_data, (a,), backward, "sqrt")


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g):
        _accum(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward, "tanh")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out_data = np.where(mask, a.data, 0).astype(a.dtype)

    def backward(g):
        _accum(a, g * mask)

    return _make(out_data, (a,), backward, "relu")


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    x = a.data
    u = _GELU_C * (x + 0.044715 * x * x * x)
    t = np.tanh(u)
    out_data = 0.5 * x * (1.0 + t)

    def backward(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        _accum(a, g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du))

    return _make(out_data.astype(x.dtype, copy=False), (a,), backward, "gelu")


def sign(a: Tensor) -> Tensor:
    # deliberately left without a gradient
    return _make(np.sign(a.data), (a,), None, "sign")


def where(mask: np.ndarray, a: Tensor, fill: float) -> Tensor:
    """Keep ``a`` where ``mask`` is true, otherwise a constant."""
    mask = np.asarray(mask, dtype=bool)
    out_data = np.where(mask, a.data, np.asarray(fill, dtype=a.dtype))

    def backward(g):
        _accum(a, np.where(mask, g, 0))

    return _make(out_data, (a,), backward, "where")


# -- reductions and shape ops ---------------------------------------------

def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))

    return _make(out_data, (a,), backward, "sum")


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    out_data = np.asarray(a.data.mean(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g / n, a.shape))

    return _make(out_data, (a,), backward, "mean")


def reshape(a: Tensor, shape) -> Tensor:
    try:
        out_data = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {tuple(shape)}") from exc

    def backward(g):
        _accum(a, g.reshape(a.shape))

    return _make(out_data, (a,), backward, "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    out_data = np.transpose(a.data, axes)

    def backward(g):
        inv = None if axes is None else np.argsort(axes)
        _accum(a, np.transpose(g, inv))

    return _make(out_data, (a,), backward, "transpose")


def swapaxes(a: Tensor, i: int, j: int) -> Tensor:
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def getitem(a: Tensor, idx) -> Tensor:
    out_data = np.asarray(a.data[idx])

    def backward(g):
        full = np.zeros_like(a.data)
        if isinstance(idx, np.ndarray) and idx.dtype.kind in "iu" and a.ndim == 2:
            # row gather (embedding lookup): scatter-add through a one-hot product
            flat = idx.reshape(-1)
            onehot = np.zeros((flat.size, a.shape[0]), dtype=a.dtype)
            onehot[np.arange(flat.size), flat] = 1
            full = onehot.T @ g.reshape(flat.size, a.shape[1])
        elif isinstance(idx, (slice, int)) or (
                isinstance(idx, tuple) and all(isinstance(i, (slice, int)) for i in idx)):
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        _accum(a, full)

    return _make(out_data, (a,), backward, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from exc
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, sizes, axis=axis)):
            _accum(t, piece)

    return _make(out_data, tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    try:
        out_data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"stack: incompatible shapes {[t.shape for t in tensors]}") from exc

    def backward(g):
        for k, t in enumerate(tensors):
            _accum(t, np.take(g, k, axis=axis))

    return _make(out_data, tensors, backward, "stack")


# -- linear algebra -------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-d, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    out_data = _binary("matmul", a, b, np.matmul)

    def backward(g):
        if a.requires_grad:
            _accum(a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            _accum(b, np.swapaxes(a.data, -1, -2) @ g)

    return _make(out_data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with weight stored as (in, out)."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


# -- normalisation and probabilities ---------------------------------------

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        _accum(a, out_data * (g - (g * out_data).sum(axis=axis, keepdims=True)))

    return _make(out_data, (a,), backward, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out_data = z - lse

    def backward(g):
        p = np.exp(out_data)
        _accum(a, g - p * g.sum(axis=axis, keepdims=True))

    return _make(out_data, (a,), backward, "log_softmax")


def layer_norm(x: Tensor, gain: Tensor | None = None, bias: Tensor | None = None,
               eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then apply the optional affine map."""
    d = x.shape[-1]
    if gain is not None and gain.shape != (d,):
        raise ShapeError(f"layer_norm: gain shape {gain.shape} != ({d},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat
    if gain is not None:
        out_data = out_data * gain.data
    if bias is not None:
        out_data = out_data + bias.data

    def backward(g):
        if bias is not None:
            _accum(bias, g)
        if gain is not None:
            _accum(gain, g * xhat)
            g = g * gain.data
        if x.requires_grad:
            dx = inv * (g - g.mean(axis=-1, keepdims=True)
                        - xhat * (g * xhat).mean(axis=-1, keepdims=True))
            _accum(x, dx)

    return _make(out_data.astype(x.dtype, copy=False), (x, gain, bias), backward, "layer_norm")


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``logits``."""
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    flat = logits.data.reshape(-1, logits.shape[-1])
    t = targets.reshape(-1)
    if t.size and (t.min() < 0 or t.max() >= flat.shape[1]):
        raise ShapeError("cross_entropy: target index out of range")
    z = flat - flat.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = t.size
    out_data = np.asarray(-logp[np.arange(n), t].mean(), dtype=logits.dtype)

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), t] -= 1.0
        _accum(logits, (g * p / n).reshape(logits.shape))

    return _make(out_data, (logits,), backward, "cross_entropy")


def parameters_zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
