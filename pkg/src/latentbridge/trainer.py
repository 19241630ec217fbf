"""Paired-vector datasets and the translator training loop."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .losses import LossWeights, composite, loss_contrast, loss_cycle, loss_dist, loss_trans
from .optim import AdamW
from .tensor import NumericError, Tensor
from .text import encode
from .toymodel import ToyModel, extract_vector
from .translator import TranslatorConfig, TranslatorParams, init_translator, translate_batch, translate_many

FORWARD, REVERSE = "forward", "reverse"


class TrainingError(RuntimeError):
    pass


@dataclass
class PairDataset:
    prompts: list[str]
    src_vectors: np.ndarray
    tgt_vectors: np.ndarray
    train_idx: np.ndarray
    heldout_idx: np.ndarray

    def __post_init__(self):
        if len(self.src_vectors) != len(self.tgt_vectors):
            raise ValueError("src and tgt row counts differ")
        if len(self.heldout_idx) == 0 or len(self.train_idx) == 0:
            raise ValueError("train and held-out splits must both be nonempty")
        if np.intersect1d(self.train_idx, self.heldout_idx).size:
            raise ValueError("train and held-out splits overlap")

    @property
    def d_src(self) -> int:
        return self.src_vectors.shape[1]

    @property
    def d_tgt(self) -> int:
        return self.tgt_vectors.shape[1]

    def __len__(self):
        return len(self.src_vectors)


def split_indices(n: int, split_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < split_fraction < 1:
        raise ValueError("split_fraction must lie strictly between 0 and 1")
    n_held = int(round(n * (1 - split_fraction)))
    if n_held < 1 or n_held >= n:
        raise ValueError(f"split_fraction {split_fraction} leaves an empty split for {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_held:]), np.sort(perm[:n_held])


def build_pair_dataset(model_src: ToyModel, model_tgt: ToyModel, prompts: list[str],
                       split_fraction: float = 0.8, seed: int = 0) -> PairDataset:
    if len(prompts) < 20:
        raise ValueError(f"need at least 20 prompts, got {len(prompts)}")
    limit = min(model_src.config.context_len, model_tgt.config.context_len)
    for i, p in enumerate(prompts):
        if not p or len(p) > limit:
            raise ValueError(f"prompt {i} has length {len(p)}, outside [1, {limit}]")
    src = np.stack([extract_vector(model_src, encode(p)) for p in prompts])
    tgt = np.stack([extract_vector(model_tgt, encode(p)) for p in prompts])
    train_idx, held_idx = split_indices(len(prompts), split_fraction, seed)
    return PairDataset(list(prompts), src, tgt, train_idx, held_idx)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    batch_size: int = 8
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainHistory:
    direction: str
    loss: list[float] = field(default_factory=list)
    heldout_cosine: list[float] = field(default_factory=list)
    initial_heldout_cosine: float = float("nan")

    @property
    def epochs(self) -> int:
        return len(self.loss)

    def to_json(self) -> dict:
        return {"direction": self.direction, "epochs": self.epochs, "loss": self.loss,
                "heldout_cosine": self.heldout_cosine,
                "initial_heldout_cosine": self.initial_heldout_cosine}


def mean_pair_cosine(pred: np.ndarray, target: np.ndarray) -> float:
    p = pred.astype(np.float64)
    t = target.astype(np.float64)
    cos = (p * t).sum(1) / (np.linalg.norm(p, axis=1) * np.linalg.norm(t, axis=1))
    return float(np.clip(cos, -1, 1).mean())


def _direction_arrays(ds: PairDataset, direction: str):
    if direction == FORWARD:
        return ds.src_vectors, ds.tgt_vectors
    if direction == REVERSE:
        return ds.tgt_vectors, ds.src_vectors
    raise ValueError(f"direction must be 'forward' or 'reverse', got {direction!r}")


def _train(ds: PairDataset, directions: tuple[str, ...], config: TrainConfig,
           arch: TranslatorConfig | None):
    if len(ds) == 0:
        raise ValueError("empty dataset")
    arch = arch or TranslatorConfig(ds.d_src, ds.d_tgt)
    nets: dict[str, TranslatorParams] = {}
    for k, d in enumerate((FORWARD, REVERSE)):
        if d in directions:
            src, tgt = _direction_arrays(ds, d)
            cfg = dataclasses.replace(arch, d_src=src.shape[1], d_tgt=tgt.shape[1], seed=config.seed + k)
            nets[d] = init_translator(cfg)
    params = {f"{d}.{name}": t for d, net in nets.items() for name, t in net.params.items()}
    opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
    w = config.weights
    joint = len(nets) == 2 and w.w_cycle > 0
    rng = np.random.default_rng(config.seed)
    histories = {d: TrainHistory(d) for d in nets}

    def heldout(d):
        src, tgt = _direction_arrays(ds, d)
        return mean_pair_cosine(translate_many(nets[d], src[ds.heldout_idx]), tgt[ds.heldout_idx])

    for d in nets:
        histories[d].initial_heldout_cosine = heldout(d)

    for epoch in range(config.epochs):
        order = rng.permutation(ds.train_idx)
        batches = [order[i:i + config.batch_size] for i in range(0, len(order), config.batch_size)]
        batches = [b for b in batches if len(b) >= 2]
        sums = {d: 0.0 for d in nets}
        for bi, idx in enumerate(batches):
            try:
                opt.zero_grad()
                total = None
                cyc = loss_cycle(nets[FORWARD], nets[REVERSE], Tensor(ds.src_vectors[idx]),
                                 Tensor(ds.tgt_vectors[idx])) if joint else None
                for d, net in nets.items():
                    src, tgt = _direction_arrays(ds, d)
                    x, y = Tensor(src[idx]), Tensor(tgt[idx])
                    pred = translate_batch(net, x)
                    comps = (loss_trans(pred, y), 0.0, loss_contrast(pred, y, w.temperature),
                             loss_dist(pred, y))
                    own = composite(comps, w)
                    sums[d] += own.item() + (w.w_cycle * cyc.item() if joint else 0.0)
                    total = own if total is None else T.add(total, own)
                if joint:
                    total = T.add(total, T.mul(cyc, w.w_cycle))
                if not np.isfinite(total.item()):
                    raise NumericError("non-finite loss")
                total.backward()
                opt.step()
            except NumericError as exc:
                raise TrainingError(f"numeric failure at epoch {epoch}, batch {bi}: {exc}") from exc
        for d in nets:
            histories[d].loss.append(sums[d] / max(1, len(batches)))
            histories[d].heldout_cosine.append(heldout(d))
    for t in params.values():
        t.grad = None
    return nets, histories


def train_translator(dataset: PairDataset, direction: str, config: TrainConfig,
                     arch: TranslatorConfig | None = None) -> tuple[TranslatorParams, TrainHistory]:
    """Train one direction on its own (no cycle term)."""
    _direction_arrays(dataset, direction)
    nets, hist = _train(dataset, (direction,), config, arch)
    return nets[direction], hist[direction]


@dataclass
class BidirectionalResult:
    forward: TranslatorParams
    reverse: TranslatorParams
    forward_history: TrainHistory
    reverse_history: TrainHistory


def train_bidirectional(dataset: PairDataset, config: TrainConfig,
                        arch: TranslatorConfig | None = None) -> BidirectionalResult:
    """Train f and g together; the cycle term couples them when its weight is positive."""
    nets, hist = _train(dataset, (FORWARD, REVERSE), config, arch)
    return BidirectionalResult(nets[FORWARD], nets[REVERSE], hist[FORWARD], hist[REVERSE])
