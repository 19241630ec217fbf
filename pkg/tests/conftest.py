import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from latentbridge import io
from latentbridge.cli import main
from latentbridge.text import encode, stock_corpus
from latentbridge.toymodel import ToyModelConfig, train_lm

_CRITERIA: list[str] = []


@pytest.fixture
def record_criterion():
    """Log one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def _record(number, title, passed, detail=""):
        _CRITERIA.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} {detail}".rstrip())
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny_model():
    cfg = ToyModelConfig(d_model=16, n_layers=4, n_heads=2, context_len=32, seed=3)
    corpus = encode(stock_corpus("instruct", seed=3, n_chars=3000))
    return train_lm(corpus, cfg, epochs=2, batch_size=8).model


@pytest.fixture(scope="session")
def tiny_pair():
    """Two small LMs with different widths-compatible configs, trained briefly."""
    a = train_lm(encode(stock_corpus("general", seed=1, n_chars=3000)),
                 ToyModelConfig(d_model=16, n_layers=3, n_heads=2, context_len=64, seed=1),
                 epochs=1, batch_size=8).model
    b = train_lm(encode(stock_corpus("instruct", seed=2, n_chars=3000)),
                 ToyModelConfig(d_model=24, n_layers=3, n_heads=2, context_len=64, seed=2),
                 epochs=1, batch_size=8).model
    return a, b


@dataclass
class StockRun:
    out: Path
    report: dict
    seconds: float
    model_a: object
    model_b: object
    forward: object


@pytest.fixture(scope="session")
def stock_run(tmp_path_factory):
    """The stock experiment through the CLI: both 64-d LMs, 60 prompts, 50 translator epochs."""
    out = tmp_path_factory.mktemp("stock") / "run"
    t0 = time.perf_counter()
    rc = main(["eval-bridge", "--seed", "0", "--out", str(out)])
    seconds = time.perf_counter() - t0
    assert rc == 0
    return StockRun(out, json.loads((out / "eval_report.json").read_text()), seconds,
                    io.load_model(out / "model_a.toym"), io.load_model(out / "model_b.toym"),
                    io.load_checkpoint(out / "translator_forward.lbtr"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
