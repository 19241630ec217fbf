import math

import numpy as np
import pytest

from latentbridge.optim import AdamW, AdamWState, adamw_step
from latentbridge.tensor import NumericError, Tensor


def _param(value):
    return {"w": Tensor(np.asarray(value, dtype=np.float64), dtype=np.float64)}


def test_zero_grads_without_decay_leave_params_unchanged(rng):
    p = {"a": Tensor(rng.standard_normal((3, 2))), "b": Tensor(rng.standard_normal(4))}
    before = {k: v.data.copy() for k, v in p.items()}
    adamw_step(p, {k: np.zeros_like(v.data) for k, v in p.items()}, AdamWState(weight_decay=0.0))
    for k in p:
        np.testing.assert_array_equal(p[k].data, before[k])


def test_first_step_matches_closed_form():
    p = _param([1.0])
    adamw_step(p, {"w": np.array([0.5])}, AdamWState(lr=1e-3, weight_decay=0.0))
    # t=1: m_hat = g, v_hat = g^2
    g, lr, eps = 0.5, 1e-3, 1e-8
    expected = 1.0 - lr * g / (math.sqrt(g * g) + eps)
    assert p["w"].data[0] == pytest.approx(expected, abs=1e-15)


def test_two_step_recurrence_matches_scalar_loop():
    p = _param([0.3])
    state = AdamWState(lr=1e-2, weight_decay=0.05)
    grads = [0.7, -1.2]
    w, m, v = 0.3, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        adamw_step(p, {"w": np.array([g])}, state)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w = w * (1 - 1e-2 * 0.05)
        w -= 1e-2 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert p["w"].data[0] == pytest.approx(w, abs=1e-14)


def test_decoupled_decay_with_zero_grads():
    p = _param([2.0, -4.0])
    adamw_step(p, {"w": np.zeros(2)}, AdamWState(lr=0.1, weight_decay=0.5))
    np.testing.assert_allclose(p["w"].data, np.array([2.0, -4.0]) * (1 - 0.1 * 0.5), rtol=0, atol=1e-15)


def test_non_finite_gradient_rejects_whole_step():
    p = {"a": Tensor(np.ones(2)), "b": Tensor(np.ones(2))}
    state = AdamWState()
    with pytest.raises(NumericError, match="'b'"):
        adamw_step(p, {"a": np.ones(2), "b": np.array([1.0, np.nan])}, state)
    np.testing.assert_array_equal(p["a"].data, np.ones(2))
    assert state.step == 0 and not state.m


def test_grad_shape_mismatch_is_rejected():
    with pytest.raises(ValueError, match="shape"):
        adamw_step(_param([1.0, 2.0]), {"w": np.ones(3)}, AdamWState())


def test_invalid_hyperparameters():
    with pytest.raises(ValueError):
        AdamWState(lr=0.0)
    with pytest.raises(ValueError):
        AdamWState(weight_decay=-1.0)


def test_wrapper_is_deterministic(rng):
    init = rng.standard_normal((4, 3))
    grads = [rng.standard_normal((4, 3)) for _ in range(5)]
    finals = []
    for _ in range(2):
        p = {"w": Tensor(init.copy(), requires_grad=True)}
        opt = AdamW(p, lr=1e-2)
        for g in grads:
            p["w"].grad = g
            opt.step()
            opt.zero_grad()
        finals.append(p["w"].data)
    np.testing.assert_array_equal(finals[0], finals[1])
