import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from latentbridge import tensor as T
from latentbridge.gradcheck import NON_DIFFERENTIABLE, OPS, grad_check
from latentbridge.losses import loss_trans
from latentbridge.tensor import NoGradientError, NumericError, ShapeError, Tensor


def finite_difference(fn, x0, eps=1e-4):
    """Independent central-difference gradient of a scalar numpy function."""
    g = np.zeros_like(x0)
    for i in range(x0.size):
        xp, xm = x0.copy().ravel(), x0.copy().ravel()
        xp[i] += eps
        xm[i] -= eps
        g.ravel()[i] = (fn(xp.reshape(x0.shape)) - fn(xm.reshape(x0.shape))) / (2 * eps)
    return g


def test_sum_gradient_is_all_ones(rng):
    x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    T.tsum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_softmax_gradient_matches_finite_differences(rng):
    x0 = rng.standard_normal(8)
    w = rng.standard_normal(8)

    def f(v):
        e = np.exp(v - v.max())
        return float((e / e.sum()) @ w)

    x = Tensor(x0, requires_grad=True, dtype=np.float64)
    T.tsum(T.mul(T.softmax(x), Tensor(w, dtype=np.float64))).backward()
    fd = finite_difference(f, x0)
    rel = np.abs(x.grad - fd) / np.maximum(1.0, np.abs(fd))
    assert rel.max() < 1e-3


def test_mse_of_identical_inputs():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    loss = loss_trans(x, x)
    loss.backward()
    assert loss.item() == 0.0
    np.testing.assert_array_equal(x.grad, np.zeros((2, 3)))


def test_shape_mismatch_names_the_op():
    with pytest.raises(ShapeError, match="matmul"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    with pytest.raises(ShapeError, match="add"):
        T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


def test_backward_requires_scalar_root():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError, match="scalar"):
        T.mul(x, 2.0).backward()


def test_non_finite_results_are_rejected():
    with pytest.raises(NumericError, match="log"):
        T.log(Tensor(np.zeros(3)))


def test_dtype_defaults_and_preservation():
    assert Tensor([1.0, 2.0]).dtype == np.float32
    a32 = np.ones((2, 2), dtype=np.float32)
    assert T.matmul(Tensor(a32), Tensor(a32)).dtype == np.float32
    assert T.matmul(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 2)))).dtype == np.float64


@pytest.mark.parametrize("name", sorted(OPS))
def test_every_registered_op_passes_grad_check(name):
    for seed in range(10):
        point = np.random.default_rng(seed).standard_normal((4, 3))
        assert grad_check(name, point, eps=1e-4, seed=seed) < 1e-3


def test_grad_check_linear_and_layer_norm(rng):
    assert grad_check("linear", rng.standard_normal((3, 6))) < 1e-3
    assert grad_check("layer_norm", rng.standard_normal((3, 6))) < 1e-3


def test_grad_check_constant_op_is_exactly_zero(rng):
    assert grad_check(lambda x: Tensor(np.ones(3), dtype=x.dtype), rng.standard_normal(4)) == 0.0


def test_grad_check_rejects_op_without_gradient(rng):
    assert "sign" in NON_DIFFERENTIABLE
    with pytest.raises(NoGradientError, match="no gradient"):
        grad_check("sign", rng.standard_normal(3))
    with pytest.raises(NoGradientError, match="no gradient"):
        grad_check(lambda x: T.sign(T.mul(x, 2.0)), rng.standard_normal(3))


def test_grad_check_eps_range(rng):
    with pytest.raises(ValueError):
        grad_check("exp", rng.standard_normal(2), eps=0.1)


def test_gradient_accumulates_over_shared_nodes():
    x = Tensor(np.array([2.0]), requires_grad=True, dtype=np.float64)
    y = T.mul(x, x)
    T.tsum(T.add(y, T.mul(y, 3.0))).backward()  # 4 x^2 -> 8x
    np.testing.assert_allclose(x.grad, [16.0])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 9)),
              elements=st.floats(-30, 30)))
def test_softmax_rows_are_distributions(x):
    p = T.softmax(Tensor(x, dtype=np.float64), axis=-1).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(2, 16)),
              elements=st.floats(-100, 100)))
def test_layer_norm_standardises_rows(x):
    # rows with negligible spread are dominated by eps and excluded
    x = x[x.std(axis=1) > 1.0]
    if len(x) == 0:
        return
    y = T.layer_norm(Tensor(x, dtype=np.float64), eps=1e-5).data
    assert np.abs(y.mean(axis=1)).max() < 1e-5
    assert np.abs(y.var(axis=1) - 1).max() < 1e-4
