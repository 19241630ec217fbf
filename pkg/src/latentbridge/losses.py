"""Composite translation objective and its four terms."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .translator import TranslatorParams, check_chain, translate_batch


@dataclass(frozen=True)
class LossWeights:
    w_trans: float = 1.0
    w_cycle: float = 0.5
    w_contrast: float = 0.3
    w_dist: float = 0.2
    temperature: float = 0.07

    def __post_init__(self):
        if min(self.w_trans, self.w_cycle, self.w_contrast, self.w_dist) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def _same_shape(name, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise T.ShapeError(f"{name}: shapes differ, {a.shape} vs {b.shape}")


def loss_trans(pred, target) -> Tensor:
    """Mean squared error over batch and coordinates."""
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    _same_shape("loss_trans", pred, target)
    diff = T.sub(pred, target)
    return T.mean(T.mul(diff, diff))


def loss_cycle(f: TranslatorParams, g: TranslatorParams, batch_src, batch_tgt) -> Tensor:
    """MSE(g(f(x)), x) + MSE(f(g(y)), y)."""
    check_chain(f, g)
    x, y = T.as_tensor(batch_src), T.as_tensor(batch_tgt)
    return T.add(loss_trans(translate_batch(g, translate_batch(f, x)), x),
                 loss_trans(translate_batch(f, translate_batch(g, y)), y))


def _unit_rows(name: str, x: Tensor) -> Tensor:
    norms = np.sqrt((x.data.astype(np.float64) ** 2).sum(axis=1))
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        raise ValueError(f"{name}: zero-norm vector at row {int(bad[0])}; cosine undefined")
    return T.div(x, T.sqrt(T.tsum(T.mul(x, x), axis=1, keepdims=True)))


def loss_contrast(pred, target, temperature: float = 0.07) -> Tensor:
    """Symmetric in-batch InfoNCE over cosine similarities."""
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    if pred.ndim != 2 or target.ndim != 2 or pred.shape[0] != target.shape[0]:
        raise T.ShapeError(f"loss_contrast: incompatible batches {pred.shape} and {target.shape}")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = pred.shape[0]
    sims = T.matmul(_unit_rows("loss_contrast", pred),
                    T.transpose(_unit_rows("loss_contrast", target))) * (1.0 / temperature)
    labels = np.arange(n)
    rows = T.cross_entropy(sims, labels)
    cols = T.cross_entropy(T.transpose(sims), labels)
    return T.mul(T.add(rows, cols), 0.5)


_STD_EPS = 1e-12


def _moments(x: Tensor) -> tuple[Tensor, Tensor]:
    n = x.shape[0]
    mu = T.mean(x, axis=0)
    xc = T.sub(x, mu)
    var = T.mul(T.tsum(T.mul(xc, xc), axis=0), 1.0 / (n - 1))
    return mu, T.sqrt(T.add(var, _STD_EPS))


def loss_dist(pred, target) -> Tensor:
    """Match per-coordinate batch means and (sample) standard deviations."""
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    _same_shape("loss_dist", pred, target)
    if pred.shape[0] < 2:
        raise ValueError("loss_dist: batch size must be >= 2 for a standard deviation")
    mp, sp = _moments(pred)
    mt, st = _moments(target)
    dm, ds = T.sub(mp, mt), T.sub(sp, st)
    return T.add(T.mean(T.mul(dm, dm)), T.mean(T.mul(ds, ds)))


def composite(components, weights: LossWeights = LossWeights()):
    """Weighted sum of (trans, cycle, contrast, dist).  Works on floats or tensors."""
    trans, cyc, contrast, dist = components
    for c in components:
        val = c.data if isinstance(c, Tensor) else np.asarray(c)
        if not np.all(np.isfinite(val)):
            raise T.NumericError("composite: non-finite loss component")
    terms = [(weights.w_trans, trans), (weights.w_cycle, cyc),
             (weights.w_contrast, contrast), (weights.w_dist, dist)]
    if not any(isinstance(c, Tensor) for _, c in terms):
        return float(sum(w * float(c) for w, c in terms))
    total = None
    for w, c in terms:
        term = T.mul(c, w) if isinstance(c, Tensor) else w * float(c)
        total = term if total is None else T.add(total, term)
    return total
