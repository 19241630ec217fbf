"""Experiment configuration and the end-to-end bridge pipeline."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .evaluation import (FIXED_RANDOM_BASELINE, alignment_report, asymmetry, effect_size,
                         random_baseline, steering_metrics)
from .injection import InjectionPolicy
from .losses import LossWeights
from .text import PromptRecord, encode, load_prompts, stock_corpus, VOCAB_SIZE
from .toymodel import ToyModel, ToyModelConfig, extract_vector, train_lm, unigram_entropy
from .trainer import (FORWARD, REVERSE, PairDataset, TrainConfig, TrainHistory, split_indices,
                      train_bidirectional)
from .translator import TranslatorConfig, TranslatorParams, translate

# seed offsets so one global seed fans out to independent streams
SEED_MODEL_A, SEED_MODEL_B, SEED_CORPUS = 101, 202, 303

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "prompts": "stock",
    "split_fraction": 0.8,
    "model_a": {"d_model": 64, "n_layers": 4, "n_heads": 4, "context_len": 64,
                "corpus": "general", "corpus_chars": 40000, "epochs": 12,
                "batch_size": 16, "lr": 0.003},
    "model_b": {"d_model": 64, "n_layers": 4, "n_heads": 4, "context_len": 64,
                "corpus": "instruct", "corpus_chars": 40000, "epochs": 12,
                "batch_size": 16, "lr": 0.003},
    "translator": {"d_hidden": 32, "n_heads": 8, "n_slots": 4},
    "train": {"epochs": 50, "lr": 0.001, "batch_size": 8, "weight_decay": 0.01,
              "weights": {"w_trans": 1.0, "w_cycle": 0.5, "w_contrast": 0.3, "w_dist": 0.2,
                          "temperature": 0.07}},
    "injection": {"alpha": 0.3, "layers": [-3, -2, -1], "positions": 3, "steps": 3},
    "eval": {"gen_steps": 24, "n_shuffles": 200, "temperature": 0.0},
    "out": "runs/bridge",
}

# the mismatched-width source model (d1 != d2)
WIDE_MODEL: dict = {"d_model": 96, "n_layers": 4, "n_heads": 4, "context_len": 64,
                    "corpus": "general", "corpus_chars": 40000, "epochs": 12,
                    "batch_size": 16, "lr": 0.003}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_CONFIG))
    base_dir: Path = Path(".")

    @classmethod
    def load(cls, path: str | Path | None = None, seed: int | None = None,
             out: str | None = None) -> "ExperimentConfig":
        raw: dict = {}
        base = Path(".")
        if path is not None:
            path = Path(path)
            raw = json.loads(path.read_text("utf-8"))
            if not isinstance(raw, dict):
                raise ValueError(f"{path}: config must be a JSON object")
            base = path.parent
        cfg = cls(_merge(DEFAULT_CONFIG, raw), base)
        if seed is not None:
            cfg.raw["seed"] = int(seed)
        if out is not None:
            cfg.raw["out"] = out
        cfg.validate()
        return cfg

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q

    def validate(self) -> None:
        prompts = self.raw["prompts"]
        if prompts != "stock" and not self.resolve(prompts).exists():
            raise FileNotFoundError(f"prompt corpus {prompts!r} does not exist")
        for key in ("model_a", "model_b"):
            ckpt = self.raw[key].get("checkpoint")
            if ckpt and not self.resolve(ckpt).exists():
                raise FileNotFoundError(f"{key} checkpoint {ckpt!r} does not exist")
        self.model_config("model_a")
        self.model_config("model_b")
        self.policy()
        self.train_config()

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def out_dir(self) -> Path:
        return Path(self.raw["out"])

    def prompts(self) -> list[PromptRecord]:
        p = self.raw["prompts"]
        return load_prompts(None if p == "stock" else self.resolve(p))

    def model_config(self, key: str) -> ToyModelConfig:
        spec = self.raw[key]
        offset = SEED_MODEL_A if key == "model_a" else SEED_MODEL_B
        return ToyModelConfig(vocab_size=VOCAB_SIZE, d_model=int(spec["d_model"]),
                              n_layers=int(spec["n_layers"]), n_heads=int(spec["n_heads"]),
                              context_len=int(spec["context_len"]), seed=self.seed + offset)

    def translator_config(self, d_src: int, d_tgt: int) -> TranslatorConfig:
        t = self.raw["translator"]
        return TranslatorConfig(d_src, d_tgt, int(t["d_hidden"]), int(t["n_heads"]),
                                int(t["n_slots"]), self.seed)

    def train_config(self) -> TrainConfig:
        t = self.raw["train"]
        return TrainConfig(epochs=int(t["epochs"]), lr=float(t["lr"]),
                           batch_size=int(t["batch_size"]), weights=LossWeights(**t["weights"]),
                           seed=self.seed, weight_decay=float(t["weight_decay"]))

    def policy(self) -> InjectionPolicy:
        return InjectionPolicy.from_json(self.raw["injection"])


# -- pipeline stages ----------------------------------------------------------

def train_stock_model(cfg: ExperimentConfig, key: str) -> tuple[ToyModel, dict]:
    spec = cfg.raw[key]
    if spec.get("checkpoint"):
        model = io.load_model(cfg.resolve(spec["checkpoint"]))
        return model, {"model": key, "checkpoint": str(spec["checkpoint"])}
    mcfg = cfg.model_config(key)
    corpus = encode(stock_corpus(spec["corpus"], seed=cfg.seed + SEED_CORPUS + mcfg.seed,
                                 n_chars=int(spec["corpus_chars"])))
    res = train_lm(corpus, mcfg, epochs=int(spec["epochs"]), batch_size=int(spec["batch_size"]),
                   lr=float(spec["lr"]))
    return res.model, {"model": key, "corpus": spec["corpus"], "epochs": int(spec["epochs"]),
                       "loss": res.loss_history, "unigram_entropy": unigram_entropy(corpus)}


def extract_store(model: ToyModel, prompts: list[str]) -> io.VectorStore:
    limit = model.config.context_len
    for i, p in enumerate(prompts):
        if not p or len(p) > limit:
            raise ValueError(f"prompt {i} has length {len(p)}, outside [1, {limit}]")
    vecs = np.stack([extract_vector(model, encode(p)) for p in prompts])
    return io.VectorStore(np.arange(len(prompts), dtype=np.uint32), vecs)


def dataset_from_stores(src: io.VectorStore, tgt: io.VectorStore, split_fraction: float,
                        seed: int, prompts: list[str] | None = None) -> PairDataset:
    if not np.array_equal(src.ids, tgt.ids):
        raise ValueError("vector stores hold different prompt ids")
    train_idx, held_idx = split_indices(len(src), split_fraction, seed)
    names = prompts if prompts is not None else [str(i) for i in src.ids]
    return PairDataset(names, src.vectors, tgt.vectors, train_idx, held_idx)


def eval_direction(direction: str, net: TranslatorParams, ds: PairDataset, n_shuffles: int,
                   seed: int) -> dict:
    src, tgt = (ds.src_vectors, ds.tgt_vectors) if direction == FORWARD else (ds.tgt_vectors, ds.src_vectors)
    idx = ds.heldout_idx
    rep = alignment_report(net, src[idx], tgt[idx], direction)
    base = random_baseline(src[idx], tgt[idx], n_shuffles, seed, translator=net)
    out = rep.to_json()
    out["baseline"] = {"kind": "empirical_derangement", "value": base}
    out["effect_size"] = effect_size(rep, base) if base > 0 else None
    out["baseline_fixed"] = {"kind": "fixed", "value": FIXED_RANDOM_BASELINE,
                             "effect_size": effect_size(rep, FIXED_RANDOM_BASELINE)}
    return out


def steering_block(cfg: ExperimentConfig, model_a: ToyModel, model_b: ToyModel,
                   f: TranslatorParams, records: list[PromptRecord], idx, policy=None) -> dict:
    ev = cfg.raw["eval"]
    policy = policy or cfg.policy()
    per_prompt, kls = [], []
    for i in idx:
        rec = records[int(i)]
        v = translate(f, extract_vector(model_a, encode(rec.full)))
        rep = steering_metrics(model_b, rec.part, rec.full, v, policy, int(ev["gen_steps"]),
                               seed=cfg.seed, temperature=float(ev["temperature"]))
        kls.append(rep.kl_per_step)
        per_prompt.append({"prompt_id": int(i), "domain": rec.domain, **rep.to_json()})
    kl_mean = np.mean(np.asarray(kls), axis=0)
    return {"policy": policy.to_json(), "kl_per_step": [float(x) for x in kl_mean],
            "mean_kl": float(kl_mean.mean()),
            "shift_score": float(np.mean([p["shift_score"] for p in per_prompt])),
            "per_prompt": per_prompt}


@dataclass
class BridgeRun:
    model_a: ToyModel
    model_b: ToyModel
    dataset: PairDataset
    forward: TranslatorParams
    reverse: TranslatorParams
    histories: dict[str, TrainHistory]
    lm_logs: dict
    report: dict
    records: list[PromptRecord]


def run_bridge(cfg: ExperimentConfig, models: tuple[ToyModel, ToyModel] | None = None,
               steering: bool = True) -> BridgeRun:
    """Train (or reuse) both LMs, build pairs, train f and g, evaluate."""
    records = cfg.prompts()
    if models is None:
        model_a, log_a = train_stock_model(cfg, "model_a")
        model_b, log_b = train_stock_model(cfg, "model_b")
        lm_logs = {"model_a": log_a, "model_b": log_b}
    else:
        (model_a, model_b), lm_logs = models, {}
    full = [r.full for r in records]
    ds = dataset_from_stores(extract_store(model_a, full), extract_store(model_b, full),
                             float(cfg.raw["split_fraction"]), cfg.seed, full)
    arch = cfg.translator_config(ds.d_src, ds.d_tgt)
    res = train_bidirectional(ds, cfg.train_config(), arch)
    n_shuffles = int(cfg.raw["eval"]["n_shuffles"])
    fwd = eval_direction(FORWARD, res.forward, ds, n_shuffles, cfg.seed)
    rev = eval_direction(REVERSE, res.reverse, ds, n_shuffles, cfg.seed)
    ratio = asymmetry(fwd["mean"], rev["mean"])
    fwd["asymmetry"] = ratio
    fwd["initial_mean"] = res.forward_history.initial_heldout_cosine
    rev["initial_mean"] = res.reverse_history.initial_heldout_cosine
    if steering:
        fwd["steering"] = steering_block(cfg, model_a, model_b, res.forward, records, ds.heldout_idx)
    report = {"forward": fwd, "reverse": rev, "asymmetry": ratio, "seed": cfg.seed,
              "heldout_ids": [int(i) for i in ds.heldout_idx]}
    hist = {FORWARD: res.forward_history, REVERSE: res.reverse_history}
    return BridgeRun(model_a, model_b, ds, res.forward, res.reverse, hist, lm_logs, report, records)
