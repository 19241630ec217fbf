"""Small post-LN decoder-only transformer LMs with hidden-state hooks."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .optim import AdamW
from .tensor import Tensor

LayerHook = Callable[[int, Tensor], Tensor]


@dataclass(frozen=True)
class ToyModelConfig:
    vocab_size: int = 128
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    context_len: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.n_layers < 3:
            raise ValueError("n_layers must be >= 3 so the final three layers exist")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if min(self.vocab_size, self.d_model, self.context_len) < 1:
            raise ValueError("vocab_size, d_model and context_len must be positive")

    @property
    def d_ff(self) -> int:
        return 4 * self.d_model

    def to_dict(self) -> dict:
        return asdict(self)


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_in, fan_out)).astype(np.float32)


def init_params(config: ToyModelConfig) -> dict[str, Tensor]:
    rng = np.random.default_rng(config.seed)
    d, V, C = config.d_model, config.vocab_size, config.context_len
    zeros = lambda *s: np.zeros(s, dtype=np.float32)  # noqa: E731
    ones = lambda *s: np.ones(s, dtype=np.float32)  # noqa: E731
    p = {
        "tok_emb": xavier(rng, V, d),
        "pos_emb": xavier(rng, C, d),
    }
    for i in range(config.n_layers):
        pre = f"layers.{i}."
        p[pre + "attn.w_qkv"] = xavier(rng, d, 3 * d)
        p[pre + "attn.b_qkv"] = zeros(3 * d)
        p[pre + "attn.w_out"] = xavier(rng, d, d)
        p[pre + "attn.b_out"] = zeros(d)
        p[pre + "ln1.g"] = ones(d)
        p[pre + "ln1.b"] = zeros(d)
        p[pre + "mlp.w_in"] = xavier(rng, d, config.d_ff)
        p[pre + "mlp.b_in"] = zeros(config.d_ff)
        p[pre + "mlp.w_out"] = xavier(rng, config.d_ff, d)
        p[pre + "mlp.b_out"] = zeros(d)
        p[pre + "ln2.g"] = ones(d)
        p[pre + "ln2.b"] = zeros(d)
    p["head.w"] = xavier(rng, d, V)
    p["head.b"] = zeros(V)
    return {k: Tensor(v, requires_grad=True) for k, v in p.items()}


@dataclass
class HiddenTrace:
    """Per-layer block outputs, each of shape (L, d_model), for one sequence."""

    layers: list[np.ndarray] = field(default_factory=list)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]


class ToyModel:
    def __init__(self, config: ToyModelConfig, params: dict[str, Tensor] | None = None):
        self.config = config
        self.params = params if params is not None else init_params(config)

    # causal mask cache keyed on length
    _masks: dict[int, np.ndarray] = {}

    @classmethod
    def _mask(cls, L: int) -> np.ndarray:
        m = cls._masks.get(L)
        if m is None:
            m = np.tril(np.ones((L, L), dtype=bool))
            cls._masks[L] = m
        return m

    def _attention(self, x: Tensor, i: int) -> Tensor:
        cfg, p = self.config, self.params
        B, L, d = x.shape
        H, dh = cfg.n_heads, d // cfg.n_heads
        qkv = T.linear(x, p[f"layers.{i}.attn.w_qkv"], p[f"layers.{i}.attn.b_qkv"])
        qkv = T.transpose(T.reshape(qkv, (B, L, 3, H, dh)), (2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = T.matmul(q, T.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dh))
        attn = T.softmax(T.where(self._mask(L), scores, -1e9), axis=-1)
        out = T.reshape(T.transpose(T.matmul(attn, v), (0, 2, 1, 3)), (B, L, d))
        return T.linear(out, p[f"layers.{i}.attn.w_out"], p[f"layers.{i}.attn.b_out"])

    def _block(self, x: Tensor, i: int) -> Tensor:
        p = self.params
        x = T.layer_norm(T.add(x, self._attention(x, i)), p[f"layers.{i}.ln1.g"], p[f"layers.{i}.ln1.b"])
        h = T.gelu(T.linear(x, p[f"layers.{i}.mlp.w_in"], p[f"layers.{i}.mlp.b_in"]))
        h = T.linear(h, p[f"layers.{i}.mlp.w_out"], p[f"layers.{i}.mlp.b_out"])
        return T.layer_norm(T.add(x, h), p[f"layers.{i}.ln2.g"], p[f"layers.{i}.ln2.b"])

    def forward(self, tokens, hook: LayerHook | None = None,
                trace: list | None = None) -> Tensor:
        """Logits of shape (B, L, vocab) for a (B, L) or (L,) token array.

        ``hook(layer_index, h)`` may replace each block's output before it
        feeds the next block; ``trace`` collects the (possibly hooked) outputs.
        """
        tokens = np.asarray(tokens, dtype=np.int64)
        if tokens.ndim == 1:
            tokens = tokens[None, :]
        B, L = tokens.shape
        if L < 1 or L > self.config.context_len:
            raise ValueError(f"sequence length {L} outside [1, {self.config.context_len}]")
        if tokens.min() < 0 or tokens.max() >= self.config.vocab_size:
            raise ValueError(f"token id out of range for vocab_size={self.config.vocab_size}")
        p = self.params
        x = T.add(p["tok_emb"][tokens], p["pos_emb"][:L])
        for i in range(self.config.n_layers):
            x = self._block(x, i)
            if hook is not None:
                x = hook(i, x)
            if trace is not None:
                trace.append(x.data)
        return T.linear(x, p["head.w"], p["head.b"])

    def hidden_trace(self, tokens, hook: LayerHook | None = None) -> tuple[np.ndarray, HiddenTrace]:
        """Single-sequence forward pass returning (logits (L, V), trace)."""
        layers: list[np.ndarray] = []
        with T.no_grad():
            logits = self.forward(tokens, hook=hook, trace=layers)
        return logits.data[0], HiddenTrace([h[0] for h in layers])

    def num_parameters(self) -> int:
        return sum(t.size for t in self.params.values())


def unigram_entropy(tokens) -> float:
    """Entropy in nats of the empirical token distribution."""
    counts = np.bincount(np.asarray(tokens, dtype=np.int64))
    probs = counts[counts > 0] / counts.sum()
    return float(-(probs * np.log(probs)).sum())


@dataclass
class LMTrainResult:
    model: ToyModel
    loss_history: list[float]


def train_lm(corpus, config: ToyModelConfig, epochs: int, batch_size: int = 16,
             lr: float = 3e-3, weight_decay: float = 0.01) -> LMTrainResult:
    """Train a toy LM on a token sequence with next-token cross-entropy.

    An epoch draws ``len(corpus) // context_len`` windows at seeded random
    offsets; the recorded loss per epoch is the mean batch loss.
    """
    corpus = np.asarray(corpus, dtype=np.int64)
    C = config.context_len
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if corpus.size <= C:
        raise ValueError(f"corpus length {corpus.size} must exceed context_len {C}")
    if corpus.min() < 0 or corpus.max() >= config.vocab_size:
        raise ValueError(f"corpus holds token id {int(corpus.max())} >= vocab_size {config.vocab_size}")

    model = ToyModel(config)
    opt = AdamW(model.params, lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng(config.seed + 1)
    n_windows = max(batch_size, corpus.size // C)
    history = []
    for _ in range(epochs):
        starts = rng.integers(0, corpus.size - C, size=n_windows)
        losses = []
        for b in range(0, n_windows, batch_size):
            idx = starts[b:b + batch_size, None] + np.arange(C + 1)[None, :]
            window = corpus[np.minimum(idx, corpus.size - 1)]
            opt.zero_grad()
            logits = model.forward(window[:, :-1])
            loss = T.cross_entropy(logits, window[:, 1:])
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    for t in model.params.values():
        t.grad = None
    return LMTrainResult(model, history)


def extract_vector(model: ToyModel, prompt) -> np.ndarray:
    """Final-layer hidden state at the last prompt position."""
    tokens = np.asarray(prompt, dtype=np.int64)
    if tokens.size == 0:
        raise ValueError("extract_vector: empty prompt")
    if tokens.size > model.config.context_len:
        raise ValueError(f"extract_vector: prompt length {tokens.size} exceeds context_len "
                         f"{model.config.context_len}")
    _, trace = model.hidden_trace(tokens)
    return trace[-1][-1].copy()


@dataclass
class Generation:
    tokens: np.ndarray          # generated tokens only
    logits: np.ndarray          # (steps, vocab), pre-sampling
    traces: list[HiddenTrace]   # per-step traces when requested, else empty


def generate(model: ToyModel, prompt, steps: int, policy=None, injected_vector=None,
             temperature: float = 0.0, seed: int = 0, keep_traces: bool = False) -> Generation:
    """Autoregressive decoding, optionally steering with an injection policy.

    Every step re-runs the full (cropped) sequence; there is no KV cache.
    """
    from .injection import bind_policy

    bound = None
    if policy is not None:
        if injected_vector is None:
            raise ValueError("generate: a policy requires an injected_vector")
        bound = bind_policy(policy, model.config.n_layers, injected_vector, model.config.d_model)
    seq = [int(t) for t in np.asarray(prompt, dtype=np.int64)]
    if not seq:
        raise ValueError("generate: empty prompt")
    rng = np.random.default_rng(seed)
    C = model.config.context_len
    out_tokens, out_logits, traces = [], [], []
    for step in range(steps):
        window = np.asarray(seq[-C:], dtype=np.int64)
        hook = bound.hook(step) if bound is not None else None
        logits, trace = model.hidden_trace(window, hook=hook)
        last = logits[-1].astype(np.float64)
        if temperature <= 0:
            nxt = int(np.argmax(last))
        else:
            z = last / temperature
            z = np.exp(z - z.max())
            nxt = int(rng.choice(z.size, p=z / z.sum()))
        seq.append(nxt)
        out_tokens.append(nxt)
        out_logits.append(logits[-1].copy())
        if keep_traces:
            traces.append(trace)
    logits_arr = np.stack(out_logits) if out_logits else np.zeros((0, model.config.vocab_size), np.float32)
    return Generation(np.asarray(out_tokens, dtype=np.int64), logits_arr, traces)
