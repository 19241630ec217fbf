import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from latentbridge.evaluation import (FIXED_RANDOM_BASELINE, alignment_report, asymmetry,
                                     count_derangements, cosine, derangements, effect_size,
                                     pair_cosines, random_baseline, shift_score,
                                     steering_metrics, summarize, symmetric_kl)
from latentbridge.injection import InjectionPolicy
from latentbridge.text import encode, load_prompts
from latentbridge.translator import TranslatorConfig, init_translator, translate_many

PUBLISHED_SIMILARITIES = [0.629, 0.594, 0.393, 0.535, 0.539]


def test_cosine_closed_forms(rng):
    v = rng.standard_normal(7)
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)
    assert cosine(v, -v) == pytest.approx(-1.0, abs=1e-12)
    assert cosine([1, 0], [1, 1]) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    with pytest.raises(ValueError, match="zero"):
        cosine([0, 0], [1, 0])


def test_published_similarity_statistics():
    rep = summarize(PUBLISHED_SIMILARITIES)
    assert rep.mean == pytest.approx(0.538, abs=1e-3)
    assert rep.std_population == pytest.approx(0.081, abs=1e-3)
    lo, hi = rep.ci95
    half = 1.96 * rep.std_population / math.sqrt(5)
    assert lo == pytest.approx(rep.mean - half) and hi == pytest.approx(rep.mean + half)


def test_statistics_match_scalar_loop(rng):
    vals = rng.uniform(-1, 1, 9).tolist()
    m = sum(vals) / 9
    sp = math.sqrt(sum((v - m) ** 2 for v in vals) / 9)
    ss = math.sqrt(sum((v - m) ** 2 for v in vals) / 8)
    rep = summarize(vals)
    assert rep.mean == pytest.approx(m, abs=1e-9)
    assert rep.std_population == pytest.approx(sp, abs=1e-9)
    assert rep.std_sample == pytest.approx(ss, abs=1e-9)


def test_identical_translations_give_unit_mean():
    tp = init_translator(TranslatorConfig(6, 5, 4, 2))
    src = np.ones((4, 6), np.float32)
    tgt = translate_many(tp, src)
    rep = alignment_report(tp, src, tgt)
    assert rep.mean == pytest.approx(1.0, abs=1e-6) and rep.std_population == pytest.approx(0.0, abs=1e-6)


def test_zero_vector_reports_pair_index():
    with pytest.raises(ValueError, match="pair 2"):
        pair_cosines(np.ones((3, 2)), np.array([[1, 0], [0, 1], [0, 0]]))


def test_alignment_needs_two_pairs():
    tp = init_translator(TranslatorConfig(6, 5, 4, 2))
    with pytest.raises(ValueError):
        alignment_report(tp, np.ones((1, 6)), np.ones((1, 5)))


def test_asymmetry():
    assert round(asymmetry(0.683, 0.339), 2) == 2.01
    assert round(asymmetry(0.758, 0.375), 2) == 2.02
    assert asymmetry(0.4, 0.4) == 1.0
    assert asymmetry(0.5, 0.0) is None
    assert asymmetry(0.5, -0.1) is None


def test_effect_sizes_against_fixed_baseline():
    for value, ratio in zip(PUBLISHED_SIMILARITIES + [0.538], [6.29, 5.94, 3.93, 5.35, 5.39, 5.38]):
        assert round(effect_size(value, FIXED_RANDOM_BASELINE), 2) == ratio
    assert effect_size(0.3, 0.3) == 1.0
    with pytest.raises(ValueError):
        effect_size(0.5, 0.0)


def test_derangement_counts():
    for n in range(1, 8):
        assert sum(1 for _ in derangements(n)) == count_derangements(n)
    assert [count_derangements(n) for n in range(7)] == [1, 0, 1, 2, 9, 44, 265]


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_baseline_exhaustive_oracle(n, rng):
    pred, tgt = rng.standard_normal((n, 5)), rng.standard_normal((n, 5))
    # every derangement visits each off-diagonal pair equally often
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                total += cosine(pred[i], tgt[j])
    oracle = total / (n * (n - 1))
    assert random_baseline(pred, tgt, n_shuffles=count_derangements(n)) == pytest.approx(oracle, abs=1e-9)


def test_sampled_baseline_approaches_oracle(rng):
    n = 12
    pred, tgt = rng.standard_normal((n, 5)), rng.standard_normal((n, 5))
    sims = [cosine(pred[i], tgt[j]) for i in range(n) for j in range(n) if i != j]
    assert random_baseline(pred, tgt, n_shuffles=3000, seed=1) == pytest.approx(np.mean(sims), abs=0.01)


def test_baseline_orthogonal_and_deterministic(rng):
    e = np.eye(6)
    assert abs(random_baseline(e, e, n_shuffles=50)) < 1e-6
    pred, tgt = rng.standard_normal((20, 4)), rng.standard_normal((20, 4))
    assert random_baseline(pred, tgt, 30, seed=4) == random_baseline(pred, tgt, 30, seed=4)
    with pytest.raises(ValueError):
        random_baseline(pred[:1], tgt[:1])


def test_baseline_through_translator(rng):
    tp = init_translator(TranslatorConfig(6, 5, 4, 2))
    src, tgt = rng.standard_normal((5, 6)), rng.standard_normal((5, 5))
    assert random_baseline(src, tgt, 44, translator=tp) == pytest.approx(
        random_baseline(translate_many(tp, src), tgt, 44), abs=1e-12)


def test_symmetric_kl_basic(rng):
    a = rng.standard_normal((3, 10))
    np.testing.assert_array_equal(symmetric_kl(a, a), np.zeros(3))
    b = rng.standard_normal((3, 10))
    np.testing.assert_allclose(symmetric_kl(a, b), symmetric_kl(b, a), atol=1e-12)
    p = np.exp(a) / np.exp(a).sum(1, keepdims=True)
    q = np.exp(b) / np.exp(b).sum(1, keepdims=True)
    oracle = (p * np.log(p / q)).sum(1) + (q * np.log(q / p)).sum(1)
    np.testing.assert_allclose(symmetric_kl(a, b), oracle, rtol=1e-5)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (2, 6), elements=st.floats(-50, 50)),
       arrays(np.float64, (2, 6), elements=st.floats(-50, 50)))
def test_symmetric_kl_non_negative(a, b):
    assert np.all(symmetric_kl(a, b) >= 0)


def test_steering_alpha_zero_is_silent(tiny_model, rng):
    v = rng.standard_normal(tiny_model.config.d_model)
    rep = steering_metrics(tiny_model, "Explain solar", "Explain solar panels simply", v,
                           InjectionPolicy(alpha=0.0), gen_steps=6)
    assert rep.kl_per_step == [0.0] * 6
    assert rep.shift_score == 0.0
    assert rep.baseline_text == rep.injected_text


def test_steering_with_injection(tiny_model, rng):
    v = 4 * rng.standard_normal(tiny_model.config.d_model)
    rep = steering_metrics(tiny_model, "Explain solar", "Explain solar panels simply", v,
                           InjectionPolicy(alpha=0.5), gen_steps=6)
    assert len(rep.kl_per_step) == 6 and min(rep.kl_per_step) >= 0
    assert rep.mean_kl > 0 and -2 <= rep.shift_score <= 2


def test_shift_score_zero_when_identical(tiny_model):
    t = encode("abc def")
    assert shift_score(tiny_model, t, t, encode("xyz")) == 0.0


@pytest.mark.slow
def test_full_strength_injection_moves_logits_more(stock_run):
    from latentbridge.experiment import ExperimentConfig, steering_block
    cfg = ExperimentConfig.load(None, seed=0)
    records = load_prompts()
    idx = stock_run.report["heldout_ids"]
    kl = {a: steering_block(cfg, stock_run.model_a, stock_run.model_b, stock_run.forward, records, idx,
                            InjectionPolicy(alpha=a))["mean_kl"] for a in (0.3, 1.0)}
    assert kl[0.3] == pytest.approx(stock_run.report["forward"]["steering"]["mean_kl"], rel=1e-12)
    assert kl[1.0] >= kl[0.3] > 0
