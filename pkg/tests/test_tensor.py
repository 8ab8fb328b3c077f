import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tokenprune import tensor as T


def test_matmul_identity(rng):
    a = rng.standard_normal((3, 3)).astype(np.float32)
    np.testing.assert_array_equal(T.matmul(np.eye(3), a), a)


def test_matmul_hand_computed():
    out = T.matmul([[1, 2], [3, 4]], [[5, 6], [7, 8]])
    np.testing.assert_array_equal(out, [[19, 22], [43, 50]])
    assert out.dtype == np.float32


def test_matmul_zeros(rng):
    out = T.matmul(np.zeros((2, 3)), rng.standard_normal((3, 4)))
    np.testing.assert_array_equal(out, np.zeros((2, 4)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(T.ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        T.matmul(np.ones((2, 3)), np.ones((4, 5)))


def test_matmul_identity_associativity_bit_identical(rng):
    a = rng.standard_normal((7, 5)).astype(np.float32)
    b = rng.standard_normal((5, 9)).astype(np.float32)
    lhs = T.matmul(T.matmul(a, np.eye(5, dtype=np.float32)), b)
    np.testing.assert_array_equal(lhs, T.matmul(a, b))


def test_matmul_repeatable(rng):
    a = rng.standard_normal((64, 48)).astype(np.float32)
    b = rng.standard_normal((48, 80)).astype(np.float32)
    first = T.matmul(a, b)
    for _ in range(5):
        np.testing.assert_array_equal(T.matmul(a, b), first)


def test_softmax_uniform():
    np.testing.assert_allclose(T.softmax([0, 0, 0, 0]), [0.25] * 4, atol=1e-7)


def test_softmax_no_overflow():
    out = T.softmax([1000.0, 0.0])
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-5)


def test_softmax_log_weights():
    out = T.softmax([math.log(1), math.log(2), math.log(3)])
    np.testing.assert_allclose(out, [1 / 6, 2 / 6, 3 / 6], atol=1e-6)


def test_softmax_axis():
    x = np.array([[0.0, 0.0], [1.0, 3.0]])
    np.testing.assert_allclose(T.softmax(x, axis=0).sum(axis=0), [1, 1], atol=1e-6)
    with pytest.raises(T.ShapeError):
        T.softmax(x, axis=2)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 40)),
              elements=st.floats(-50, 50, width=32)))
def test_softmax_slices_sum_to_one(x):
    out = T.softmax(x, axis=-1)
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-5)


def test_layer_norm_constant_row():
    out = T.layer_norm(np.full((1, 4), 3.5), np.ones(4), np.zeros(4))
    np.testing.assert_array_equal(out, np.zeros((1, 4)))


def test_layer_norm_closed_form():
    out = T.layer_norm([1.0, 2.0, 3.0], np.ones(3), np.zeros(3))
    # mean 2, population variance 2/3
    expected = (np.array([1, 2, 3]) - 2) / math.sqrt(2 / 3)
    np.testing.assert_allclose(out, expected, atol=1e-3)
    np.testing.assert_allclose(out, [-1.2247, 0.0, 1.2247], atol=1e-3)


def test_layer_norm_zero_gamma_gives_beta(rng):
    beta = rng.standard_normal(6).astype(np.float32)
    out = T.layer_norm(rng.standard_normal((4, 6)), np.zeros(6), beta)
    np.testing.assert_array_equal(out, np.broadcast_to(beta, (4, 6)))


def test_layer_norm_length_mismatch():
    with pytest.raises(T.ShapeError):
        T.layer_norm(np.ones((2, 4)), np.ones(3), np.zeros(4))


def test_gelu_values():
    assert T.gelu(np.float32(0.0)) == 0.0
    x = np.linspace(-6, 6, 101)
    exact = 0.5 * x * (1 + np.vectorize(math.erf)(x / math.sqrt(2)))
    np.testing.assert_allclose(T.gelu(x), exact, atol=1e-3)


def test_linear(rng):
    x = rng.standard_normal((2, 3, 4)).astype(np.float32)
    w = rng.standard_normal((4, 5)).astype(np.float32)
    b = rng.standard_normal(5).astype(np.float32)
    np.testing.assert_allclose(T.linear(x, w, b), x @ w + b, rtol=1e-6)
    with pytest.raises(T.ShapeError):
        T.linear(x, w.T)
    with pytest.raises(T.ShapeError):
        T.linear(x, w, np.ones(4))


def test_amax_and_sum():
    np.testing.assert_array_equal(T.amax([[1, 5], [3, 2]], axis=0), [3, 5])
    np.testing.assert_array_equal(T.sum([[1, 2], [3, 4]], axis=1), [3, 7])
    with pytest.raises(T.ShapeError):
        T.amax([[1, 2]], axis=3)
    with pytest.raises(T.ShapeError):
        T.sum([[1, 2]], axis=-3)


def test_as_tensor_rejects_non_finite():
    with pytest.raises(ValueError):
        T.as_tensor([1.0, np.nan])
    with pytest.raises(T.ShapeError):
        T.as_tensor(np.ones((0, 3)))
