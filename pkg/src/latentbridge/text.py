"""Character tokenizer, prompt-corpus parsing and the stock training corpora."""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

VOCAB_SIZE = 128


def encode(text: str) -> np.ndarray:
    ids = np.frombuffer(text.encode("ascii", errors="strict"), dtype=np.uint8)
    return ids.astype(np.int64)


def decode(tokens) -> str:
    return bytes(int(t) for t in tokens).decode("ascii", errors="replace")


@dataclass(frozen=True)
class PromptRecord:
    domain: str
    full: str
    part: str


def parse_prompts(text: str) -> list[PromptRecord]:
    """Parse ``domain<TAB>full<TAB>part`` lines; blank lines and ``#`` comments are skipped."""
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"prompt line {lineno}: expected 3 tab-separated fields, got {len(fields)}")
        records.append(PromptRecord(*(f.strip() for f in fields)))
    return records


def load_prompts(path: str | Path | None = None) -> list[PromptRecord]:
    if path is None or str(path) == "stock":
        text = resources.files("latentbridge.data").joinpath("prompts.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return parse_prompts(text)


# -- stock corpora -----------------------------------------------------------
# Both models read about the same five topics; they differ in register.  The
# general model sees encyclopedic, news and conversational prose, the
# instruction model sees the same facts wrapped in request/response templates.

_FACTS = {
    "machine learning": [
        "models learn patterns from data",
        "a classifier sorts email into spam and not spam",
        "banks use it to flag fraud",
        "shops recommend products with it",
        "doctors read scans with its help",
        "training fits weights to examples",
        "neural networks stack simple layers",
    ],
    "quantum computing": [
        "qubits hold a blend of zero and one",
        "entangled qubits share one state",
        "gates rotate the state of a qubit",
        "noise makes qubits lose their state",
        "it may break some codes used today",
        "chemists hope to model molecules with it",
        "error correction guards fragile qubits",
    ],
    "photosynthesis": [
        "plants turn light into sugar",
        "leaves take in carbon dioxide",
        "chlorophyll absorbs red and blue light",
        "oxygen is released as a by product",
        "it happens inside the chloroplast",
        "the light reactions split water",
        "algae and plants both do it",
    ],
    "blockchain": [
        "a ledger is shared by many nodes",
        "blocks are chained by hashes",
        "miners or validators add new blocks",
        "records are hard to change later",
        "coins move without a central bank",
        "smart contracts run code on chain",
        "supply chains track goods with it",
    ],
    "renewable energy": [
        "solar panels turn sunlight into power",
        "wind turbines spin in steady wind",
        "hydro dams use falling water",
        "batteries store power for the night",
        "it cuts carbon from the grid",
        "costs for solar keep falling",
        "grids must balance changing supply",
    ],
}

_GENERAL_TEMPLATES = [
    "In short, {topic} means that {fact}. ",
    "Reports say {fact}, and {topic} keeps growing. ",
    "\"Did you know {fact}?\" she asked. \"That is {topic} for you.\" ",
    "News: {fact}. Experts on {topic} expect more. ",
    "Some people think {topic} is hard, but {fact}. ",
    "A note on {topic}: {fact}; also {fact2}. ",
    "The history of {topic} shows that {fact}. ",
    "Why care about {topic}? Because {fact}. ",
]

_INSTRUCT_TEMPLATES = [
    "User: Explain {topic}.\nAssistant: Sure. {Fact}. Also, {fact2}.\n",
    "User: Give an example of {topic}.\nAssistant: One example: {fact}.\n",
    "User: What is {topic}?\nAssistant: {Topic} is a field where {fact}.\n",
    "User: List uses of {topic}.\nAssistant: 1. {Fact}. 2. {Fact2}.\n",
    "User: Summarize {topic} in one line.\nAssistant: {Fact}.\n",
    "User: Tell me about {topic} and its applications.\nAssistant: {Fact}; {fact2}.\n",
]

_FILLER = [
    "The weather was mild and the market was busy. ",
    "He walked to the station and waited for the train. ",
    "Numbers like 12, 40 and 365 appear in the table. ",
    "Thank you for reading this short note. ",
]


def _cap(s: str) -> str:
    return s[:1].upper() + s[1:]


def _render(templates, rng: np.random.Generator, prompts: list[PromptRecord] | None,
            n_chars: int, filler: bool, instruct: bool) -> str:
    topics = list(_FACTS)
    pieces: list[str] = []
    total = 0
    while total < n_chars:
        if prompts and rng.random() < 0.15:
            rec = prompts[rng.integers(len(prompts))]
            topic = rec.domain.lower()
            facts = _FACTS.get(topic, _FACTS[topics[0]])
            fact = facts[rng.integers(len(facts))]
            if instruct:
                piece = f"User: {rec.full}\nAssistant: {_cap(fact)}.\n"
            else:
                piece = f"{rec.full} {_cap(fact)}. "
        elif filler and rng.random() < 0.1:
            piece = _FILLER[rng.integers(len(_FILLER))]
        else:
            topic = topics[rng.integers(len(topics))]
            facts = _FACTS[topic]
            i, j = rng.choice(len(facts), size=2, replace=False)
            t = templates[rng.integers(len(templates))]
            piece = t.format(topic=topic, Topic=_cap(topic), fact=facts[i], Fact=_cap(facts[i]),
                             fact2=facts[j], Fact2=_cap(facts[j]))
        pieces.append(piece)
        total += len(piece)
    return "".join(pieces)[:n_chars]


def stock_corpus(kind: str, seed: int = 0, n_chars: int = 40000,
                 prompts: list[PromptRecord] | None = None) -> str:
    """Deterministic training text for the ``general`` or ``instruct`` model.

    ``prompts`` are mixed into the text only when given; the stock pipeline
    leaves them out so the LMs never see the evaluation prompts.
    """
    rng = np.random.default_rng(seed)
    if kind == "general":
        return _render(_GENERAL_TEMPLATES, rng, prompts, n_chars, filler=True, instruct=False)
    if kind == "instruct":
        return _render(_INSTRUCT_TEMPLATES, rng, prompts, n_chars, filler=False, instruct=True)
    raise ValueError(f"unknown corpus kind {kind!r}; expected 'general' or 'instruct'")
