"""Alignment statistics, asymmetry, effect sizes and steering metrics."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .injection import InjectionPolicy
from .text import decode, encode
from .toymodel import ToyModel, extract_vector, generate
from .translator import TranslatorParams, translate_many

Z95 = 1.96
FIXED_RANDOM_BASELINE = 0.1
KL_SMOOTHING = 1e-9


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine: zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass
class AlignmentReport:
    direction: str
    per_pair: list[float]
    mean: float
    std_population: float
    std_sample: float
    ci95: tuple[float, float]

    def to_json(self) -> dict:
        return {"direction": self.direction, "per_pair": self.per_pair, "mean": self.mean,
                "std_population": self.std_population, "std_sample": self.std_sample,
                "ci95": list(self.ci95)}


def summarize(values, direction: str = "") -> AlignmentReport:
    """Mean, population/sample std and the normal-approximation 95% CI."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        raise ValueError("need at least 2 values")
    m = float(v.mean())
    sp = float(v.std(ddof=0))
    ss = float(v.std(ddof=1))
    half = Z95 * sp / math.sqrt(v.size)
    return AlignmentReport(direction, [float(x) for x in v], m, sp, ss, (m - half, m + half))


def pair_cosines(pred, target) -> list[float]:
    out = []
    for i, (p, t) in enumerate(zip(pred, target)):
        try:
            out.append(cosine(p, t))
        except ValueError as exc:
            raise ValueError(f"pair {i}: {exc}") from None
    return out


def alignment_report(translator: TranslatorParams, src, tgt, direction: str = "forward") -> AlignmentReport:
    src = np.asarray(src)
    if len(src) < 2:
        raise ValueError("alignment_report needs at least 2 pairs")
    return summarize(pair_cosines(translate_many(translator, src), tgt), direction)


def _mean_of(x) -> float:
    return x.mean if isinstance(x, AlignmentReport) else float(x)


def asymmetry(forward, reverse) -> float | None:
    """Forward-to-reverse ratio of mean alignment; ``None`` when undefined."""
    r = _mean_of(reverse)
    if r <= 0:
        return None
    return _mean_of(forward) / r


def effect_size(report, baseline: float) -> float:
    if baseline <= 0:
        raise ValueError("baseline must be positive")
    return _mean_of(report) / baseline


def derangements(n: int):
    for perm in itertools.permutations(range(n)):
        if all(p != i for i, p in enumerate(perm)):
            yield perm


def count_derangements(n: int) -> int:
    d = [1, 0]
    for k in range(2, n + 1):
        d.append((k - 1) * (d[-1] + d[-2]))
    return d[n]


def random_baseline(src, tgt, n_shuffles: int = 100, seed: int = 0,
                    translator: TranslatorParams | None = None) -> float:
    """Mean cosine over mispairings (derangements) of predictions and targets.

    When every derangement fits in ``n_shuffles`` they are enumerated exactly;
    otherwise ``n_shuffles`` derangements are drawn with a seeded generator.
    """
    if n_shuffles < 1:
        raise ValueError("n_shuffles must be >= 1")
    pred = np.asarray(src) if translator is None else translate_many(translator, src)
    tgt = np.asarray(tgt)
    n = len(pred)
    if n < 2:
        raise ValueError("random_baseline needs at least 2 pairs")
    p = pred.astype(np.float64)
    t = tgt.astype(np.float64)
    p = p / np.linalg.norm(p, axis=1, keepdims=True)
    t = t / np.linalg.norm(t, axis=1, keepdims=True)
    sims = np.clip(p @ t.T, -1, 1)
    if n <= 8 and count_derangements(n) <= n_shuffles:
        perms = list(derangements(n))
    else:
        rng = np.random.default_rng(seed)
        perms = []
        while len(perms) < n_shuffles:
            perm = rng.permutation(n)
            if np.all(perm != np.arange(n)):
                perms.append(perm)
    rows = np.arange(n)
    return float(np.mean([sims[rows, np.asarray(perm)].mean() for perm in perms]))


@dataclass
class SteeringReport:
    kl_per_step: list[float]
    shift_score: float
    baseline_text: str = ""
    injected_text: str = ""
    reference_text: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def mean_kl(self) -> float:
        return float(np.mean(self.kl_per_step)) if self.kl_per_step else 0.0

    def to_json(self) -> dict:
        return {"kl_per_step": self.kl_per_step, "shift_score": self.shift_score,
                "mean_kl": self.mean_kl, "baseline_text": self.baseline_text,
                "injected_text": self.injected_text, "reference_text": self.reference_text}


def _probs(logits: np.ndarray) -> np.ndarray:
    z = logits.astype(np.float64)
    z = np.exp(z - z.max(axis=-1, keepdims=True))
    p = z / z.sum(axis=-1, keepdims=True) + KL_SMOOTHING
    return p / p.sum(axis=-1, keepdims=True)


def symmetric_kl(logits_a: np.ndarray, logits_b: np.ndarray) -> np.ndarray:
    """KL(p||q) + KL(q||p) per row, after epsilon smoothing."""
    p, q = _probs(logits_a), _probs(logits_b)
    lr = np.log(p) - np.log(q)
    return np.maximum((p * lr).sum(-1) - (q * lr).sum(-1), 0.0)


def shift_score(model: ToyModel, injected, baseline, reference) -> float:
    """cos(injected, reference) - cos(baseline, reference) on extracted vectors."""
    C = model.config.context_len

    def vec(tokens):
        tokens = np.asarray(tokens, dtype=np.int64)[-C:]
        return extract_vector(model, tokens)

    r = vec(reference)
    return cosine(vec(injected), r) - cosine(vec(baseline), r)


def steering_metrics(model_tgt: ToyModel, part_prompt: str, full_prompt: str, translated_v,
                     policy: InjectionPolicy, gen_steps: int = 24, seed: int = 0,
                     temperature: float = 0.0) -> SteeringReport:
    """Run baseline, injected and reference generations and compare them."""
    if gen_steps < 1:
        raise ValueError("gen_steps must be >= 1")
    part, full = encode(part_prompt), encode(full_prompt)
    base = generate(model_tgt, part, gen_steps, temperature=temperature, seed=seed)
    inj = generate(model_tgt, part, gen_steps, policy=policy, injected_vector=translated_v,
                   temperature=temperature, seed=seed)
    ref = generate(model_tgt, full, gen_steps, temperature=temperature, seed=seed)
    kl = symmetric_kl(base.logits, inj.logits)
    score = shift_score(model_tgt, inj.tokens, base.tokens, ref.tokens)
    return SteeringReport([float(x) for x in kl], float(score), decode(base.tokens),
                          decode(inj.tokens), decode(ref.tokens))
