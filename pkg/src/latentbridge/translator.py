"""Dual-encoder translator: extractor -> slot attention alignment -> generator."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor
from .toymodel import xavier


@dataclass(frozen=True)
class TranslatorConfig:
    d_src: int
    d_tgt: int
    d_hidden: int = 32
    n_heads: int = 8
    n_slots: int = 4
    seed: int = 0

    def __post_init__(self):
        if min(self.d_src, self.d_tgt, self.d_hidden, self.n_heads) < 1:
            raise ValueError("translator dimensions must be positive")
        if self.d_hidden % self.n_heads:
            raise ValueError(f"d_hidden={self.d_hidden} is not divisible by n_heads={self.n_heads}")
        if self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def reversed(self, seed: int | None = None) -> "TranslatorConfig":
        return TranslatorConfig(self.d_tgt, self.d_src, self.d_hidden, self.n_heads,
                                self.n_slots, self.seed if seed is None else seed)

    def parameter_count(self) -> int:
        s, t, h, n = self.d_src, self.d_tgt, self.d_hidden, self.n_slots
        extractor = s * h + h
        slots = n * h * h + n * h
        attention = 4 * (h * h + h)
        norm = 2 * h
        generator = h * t + t
        return extractor + slots + attention + norm + generator


class TranslatorParams:
    """Named parameter tensors for one translation direction."""

    def __init__(self, config: TranslatorConfig, params: dict[str, Tensor]):
        self.config = config
        self.params = params

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    @property
    def dtype(self):
        return self.params["extractor.w"].dtype

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def astype(self, dtype) -> "TranslatorParams":
        return TranslatorParams(self.config, {k: Tensor(v.data.astype(dtype), requires_grad=v.requires_grad)
                                              for k, v in self.params.items()})

    def copy(self) -> "TranslatorParams":
        return self.astype(self.dtype)


def init_translator(config: TranslatorConfig) -> TranslatorParams:
    rng = np.random.default_rng(config.seed)
    h, n = config.d_hidden, config.n_slots
    p = {
        "extractor.w": xavier(rng, config.d_src, h),
        "extractor.b": np.zeros(h, np.float32),
        "slots.w": np.stack([xavier(rng, h, h) for _ in range(n)]),
        "slots.b": np.zeros((n, h), np.float32),
    }
    for name in ("q", "k", "v", "out"):
        p[f"attn.w_{name}"] = xavier(rng, h, h)
        p[f"attn.b_{name}"] = np.zeros(h, np.float32)
    p["norm.g"] = np.ones(h, np.float32)
    p["norm.b"] = np.zeros(h, np.float32)
    p["generator.w"] = xavier(rng, h, config.d_tgt)
    p["generator.b"] = np.zeros(config.d_tgt, np.float32)
    return TranslatorParams(config, {k: Tensor(v, requires_grad=True) for k, v in p.items()})


def translate_batch(tp: TranslatorParams, x: Tensor) -> Tensor:
    """Differentiable forward pass over a (B, d_src) batch."""
    cfg, p = tp.config, tp.params
    if x.ndim != 2 or x.shape[1] != cfg.d_src:
        raise T.ShapeError(f"translate: expected (B, {cfg.d_src}) input, got {x.shape}")
    B, h, n, H = x.shape[0], cfg.d_hidden, cfg.n_slots, cfg.n_heads
    dh = h // H
    e = T.gelu(T.linear(x, p["extractor.w"], p["extractor.b"]))
    # each slot is a distinct learned linear view of the extracted feature
    slots = T.matmul(T.reshape(e, (B, 1, 1, h)), p["slots.w"])
    slots = T.add(T.reshape(slots, (B, n, h)), p["slots.b"])

    def heads(w, b):
        y = T.linear(slots, p[w], p[b])
        return T.transpose(T.reshape(y, (B, n, H, dh)), (0, 2, 1, 3))

    q, k, v = heads("attn.w_q", "attn.b_q"), heads("attn.w_k", "attn.b_k"), heads("attn.w_v", "attn.b_v")
    scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh))
    mixed = T.matmul(T.softmax(scores, axis=-1), v)
    mixed = T.reshape(T.transpose(mixed, (0, 2, 1, 3)), (B, n, h))
    mixed = T.linear(mixed, p["attn.w_out"], p["attn.b_out"])
    aligned = T.layer_norm(T.add(slots, mixed), p["norm.g"], p["norm.b"])
    pooled = T.mean(aligned, axis=1)
    return T.linear(pooled, p["generator.w"], p["generator.b"])


def translate(tp: TranslatorParams, v) -> np.ndarray:
    v = np.asarray(v, dtype=tp.dtype)
    if v.shape != (tp.config.d_src,):
        raise ValueError(f"translate: expected a vector of length {tp.config.d_src}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("translate: input contains non-finite values")
    with T.no_grad():
        out = translate_batch(tp, Tensor(v[None, :], dtype=tp.dtype)).data[0]
    return out


def translate_many(tp: TranslatorParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=tp.dtype)
    with T.no_grad():
        return translate_batch(tp, Tensor(X, dtype=tp.dtype)).data


def check_chain(f: TranslatorParams, g: TranslatorParams) -> None:
    if f.config.d_tgt != g.config.d_src or g.config.d_tgt != f.config.d_src:
        raise ValueError(
            f"incompatible translator chain: f {f.config.d_src}->{f.config.d_tgt}, "
            f"g {g.config.d_src}->{g.config.d_tgt}")


def cycle(f: TranslatorParams, g: TranslatorParams, v) -> np.ndarray:
    """``g(f(v))``."""
    check_chain(f, g)
    return translate(g, translate(f, v))
