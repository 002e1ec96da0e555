import math

import numpy as np
import pytest

from hybkan.gradcheck import check_dualop
from hybkan.tensor import (
    PRIMITIVES,
    ConfigError,
    DimensionError,
    NonFiniteError,
    conv1d_same,
    gelu,
    layer_norm,
    matmul,
    resolve_dtype,
    softmax_rows,
    toeplitz_same,
)


def test_matmul_identity_and_zero():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(a, np.eye(2)), a)
    assert np.array_equal(matmul(np.ones((3, 4)), np.zeros((4, 2))), np.zeros((3, 2)))


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_rejects_non_finite():
    with pytest.raises(NonFiniteError), np.errstate(invalid="ignore"):
        matmul(np.array([[np.inf]]), np.array([[0.0]]))


def test_softmax_closed_forms():
    assert np.allclose(softmax_rows(np.array([[0.0, 0.0]])), [[0.5, 0.5]])
    assert np.allclose(softmax_rows(np.array([[0.0, math.log(3.0)]])), [[0.25, 0.75]])


def test_softmax_shift_invariance_bitwise():
    # dyadic entries keep x + 1000 exact, so any difference would come from softmax itself
    x = np.random.default_rng(0).integers(-40, 40, size=(4, 6)) / 8.0
    assert np.array_equal(softmax_rows(x), softmax_rows(x + 1000.0))


def test_layer_norm_constant_row_and_normalised_row():
    g, b = np.ones(4), np.zeros(4)
    out, _ = layer_norm(np.full((1, 4), 3.0), g, b)
    assert np.all(np.abs(out) < 1e-3)
    out, _ = layer_norm(np.array([[-1.0, 1.0]]), np.ones(2), np.zeros(2), eps=1e-12)
    assert np.allclose(out, [[-1.0, 1.0]], atol=1e-9)


def test_gelu_reference_points():
    assert gelu(np.array(0.0)) == 0.0
    assert abs(gelu(np.array(10.0)) - 10.0) < 1e-6
    assert abs(gelu(np.array(-10.0))) < 1e-6
    # exact form, not the tanh approximation: x * Phi(x) at x = 1
    assert abs(gelu(np.array(1.0)) - 0.8413447460685429) < 1e-15


def test_conv_delta_kernel_is_identity():
    x = np.random.default_rng(1).standard_normal((3, 9))
    assert np.array_equal(conv1d_same(x, np.array([1.0])), x)


def test_conv_constant_signal_interior_and_edges():
    x = np.full((1, 8), 2.0)
    out = conv1d_same(x, np.array([0.25, 0.5, 0.25]))
    assert np.allclose(out[0, 1:-1], 2.0)
    # zero padding attenuates the edges
    assert np.allclose(out[0, [0, -1]], 1.5)


def test_conv_against_direct_summation():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 11))
    k = np.array([0.25, 0.5, 0.25])
    r = 1
    expected = np.zeros_like(x)
    for row in range(x.shape[0]):
        for i in range(x.shape[1]):
            for m in range(3):
                j = i + m - r
                if 0 <= j < x.shape[1]:
                    expected[row, i] += k[m] * x[row, j]
    assert np.allclose(conv1d_same(x, k), expected, atol=1e-14)


def test_toeplitz_matches_conv():
    rng = np.random.default_rng(3)
    k = rng.standard_normal(5)
    x = rng.standard_normal((4, 7))
    assert np.allclose(x @ toeplitz_same(k, 7), conv1d_same(x, k))


def test_conv_rejects_even_kernel():
    with pytest.raises(ConfigError):
        conv1d_same(np.ones((1, 4)), np.ones(2))


@pytest.mark.parametrize("op", PRIMITIVES, ids=lambda o: o.name)
def test_primitive_backward_matches_central_differences(op):
    for r in check_dualop(op, seed=0):
        assert r.passed, r.line()
        assert r.max_rel_err < 1e-6, r.line()


def test_resolve_dtype():
    assert resolve_dtype(32) == np.float32
    assert resolve_dtype("64") == np.float64
    with pytest.raises(ConfigError):
        resolve_dtype(16)
