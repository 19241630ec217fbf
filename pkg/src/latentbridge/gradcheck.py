"""Central finite-difference checks for the autodiff engine."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import tensor as T
from .tensor import NoGradientError, Tensor


def _as_scalar(out: Tensor, proj: np.ndarray | None) -> Tensor:
    if out.size == 1:
        return out.reshape(())
    return T.tsum(T.mul(out, Tensor(proj, dtype=out.dtype)))


def grad_check(fn: Callable[[Tensor], Tensor] | str, point, eps: float = 1e-4,
               seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` maps a tensor to a tensor (or names an entry of ``OPS``).  Non-scalar
    outputs are contracted with a fixed random projection so a single backward
    pass covers the whole Jacobian-vector product.  Runs in float64.
    """
    if not 0 < eps <= 1e-2:
        raise ValueError("eps must lie in (0, 1e-2]")
    if isinstance(fn, str):
        if fn in NON_DIFFERENTIABLE:
            raise NoGradientError(f"{fn}: no gradient registered for this op")
        fn = OPS[fn]
    x0 = np.asarray(point.data if isinstance(point, Tensor) else point, dtype=np.float64)

    x = Tensor(x0.copy(), requires_grad=True, dtype=np.float64)
    out = fn(x)
    proj = None
    if out.size != 1:
        proj = np.random.default_rng(seed).standard_normal(out.shape)
    loss = _as_scalar(out, proj)
    if loss.requires_grad:
        loss.backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(x0)

    numeric = np.zeros_like(x0)
    flat = numeric.reshape(-1)
    with T.no_grad():
        for i in range(x0.size):
            xp = x0.copy().reshape(-1)
            xm = x0.copy().reshape(-1)
            xp[i] += eps
            xm[i] -= eps
            fp = _as_scalar(fn(Tensor(xp.reshape(x0.shape), dtype=np.float64)), proj).item()
            fm = _as_scalar(fn(Tensor(xm.reshape(x0.shape), dtype=np.float64)), proj).item()
            flat[i] = (fp - fm) / (2 * eps)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max()) if err.size else 0.0


def _fixed(shape, seed):
    return np.random.default_rng(seed).standard_normal(shape)


def _linear(x: Tensor) -> Tensor:
    w = Tensor(_fixed((x.shape[-1], 5), 11), dtype=x.dtype)
    b = Tensor(_fixed((5,), 12), dtype=x.dtype)
    return T.linear(x, w, b)


def _linear_weight(w: Tensor) -> Tensor:
    x = Tensor(_fixed((3, w.shape[0]), 13), dtype=w.dtype)
    return T.matmul(x, w)


def _layer_norm(x: Tensor) -> Tensor:
    d = x.shape[-1]
    return T.layer_norm(x, Tensor(_fixed((d,), 14), dtype=x.dtype),
                        Tensor(_fixed((d,), 15), dtype=x.dtype))


def _layer_norm_affine(x: Tensor) -> Tensor:
    # rows 0 and 1 of the probe act as gain and bias
    h = Tensor(_fixed((4, x.shape[-1]), 16), dtype=x.dtype)
    return T.layer_norm(h, x[0], x[1])


def _cross_entropy(x: Tensor) -> Tensor:
    targets = np.arange(x.shape[0]) % x.shape[-1]
    return T.cross_entropy(x, targets)


def _attention_like(x: Tensor) -> Tensor:
    # scores -> causal mask -> softmax -> weighted sum, the path every attention head takes
    s = T.matmul(x, T.transpose(x)) * 0.5
    mask = np.tril(np.ones((x.shape[0], x.shape[0]), dtype=bool))
    p = T.softmax(T.where(mask, s, -1e9), axis=-1)
    return T.matmul(p, x)


# Unary wrappers over every differentiable primitive, keyed by op name; inputs
# are (rows, cols) matrices.  Positivity-requiring ops shift their input.
OPS: dict[str, Callable[[Tensor], Tensor]] = {
    "add": lambda x: T.add(x, Tensor(_fixed(x.shape[-1:], 1), dtype=x.dtype)),
    "sub": lambda x: T.sub(Tensor(_fixed(x.shape, 2), dtype=x.dtype), x),
    "mul": lambda x: T.mul(x, x),
    "div": lambda x: T.div(x, T.add(T.mul(x, x), 1.0)),
    "pow": lambda x: T.power(T.add(T.mul(x, x), 0.5), 1.5),
    "exp": lambda x: T.exp(x),
    "log": lambda x: T.log(T.add(T.mul(x, x), 0.1)),
    "sqrt": lambda x: T.sqrt(T.add(T.mul(x, x), 0.1)),
    "tanh": lambda x: T.tanh(x),
    "gelu": lambda x: T.gelu(x),
    "relu": lambda x: T.relu(x),
    "sum": lambda x: T.tsum(x, axis=0),
    "mean": lambda x: T.mean(x, axis=-1, keepdims=True),
    "reshape": lambda x: T.reshape(x, (-1,)),
    "transpose": lambda x: T.transpose(x),
    "getitem": lambda x: x[np.array([0, 0, x.shape[0] - 1])],
    "concat": lambda x: T.concat([x, T.mul(x, 2.0)], axis=-1),
    "stack": lambda x: T.stack([x, T.exp(x)], axis=0),
    "where": lambda x: T.where(np.eye(*x.shape, dtype=bool), x, 0.0),
    "matmul": _linear_weight,
    "linear": _linear,
    "softmax": lambda x: T.softmax(x, axis=-1),
    "log_softmax": lambda x: T.log_softmax(x, axis=-1),
    "layer_norm": _layer_norm,
    "layer_norm_affine": _layer_norm_affine,
    "cross_entropy": _cross_entropy,
    "attention": _attention_like,
}

NON_DIFFERENTIABLE = {"sign": T.sign}
