import numpy as np
import pytest
from scipy.interpolate import BSpline

from hybkan.gradcheck import check_module
from hybkan.spline import (
    EffKanLayer,
    SplineGrid,
    bspline_basis,
    bspline_basis_with_derivative,
    effkan_init,
    effkan_param_count,
)
from hybkan.tensor import gelu
from oracles import cox_de_boor


def test_knots_uniform_and_count():
    g = SplineGrid()
    t = g.knots
    assert len(t) == g.grid_size + 2 * g.order + 1
    assert np.allclose(np.diff(t), 3.0 / 5)
    assert g.num_basis == 8


def test_partition_of_unity():
    g = SplineGrid()
    x = np.random.default_rng(0).uniform(-1.5, 1.5, 10_000)
    assert np.max(np.abs(bspline_basis(x, g).sum(-1) - 1.0)) < 1e-10


def test_order_zero_indicator():
    g = SplineGrid(order=0)
    x = np.random.default_rng(1).uniform(-1.5, 1.4999, 500)
    b = bspline_basis(x, g)
    assert np.all(b.sum(-1) == 1.0)
    assert set(np.unique(b)) <= {0.0, 1.0}


def test_central_value_two_thirds():
    g = SplineGrid()
    t = g.knots
    for i in range(g.num_basis):
        centre = t[i + 2]
        ours = bspline_basis(np.array([centre]), g)[0, i]
        assert abs(cox_de_boor(t, i, 3, centre) - 2 / 3) < 1e-12
        assert abs(ours - 2 / 3) < 1e-12


def test_matches_scipy_and_scalar_oracle():
    g = SplineGrid()
    t = g.knots
    x = np.linspace(-1.5, 1.49, 37)
    ours = bspline_basis(x, g)
    for i in range(g.num_basis):
        ref = BSpline.basis_element(t[i:i + 5], extrapolate=False)(x)
        ref = np.nan_to_num(ref)
        assert np.allclose(ours[:, i], ref, atol=1e-12)
        assert np.allclose(ours[:, i], [cox_de_boor(t, i, 3, v) for v in x], atol=1e-12)


def test_local_support_exact():
    g = SplineGrid()
    t = g.knots
    x = np.random.default_rng(2).uniform(-1.5, 1.5, 2000)
    b = bspline_basis(x, g)
    for i in range(g.num_basis):
        outside = (x < t[i]) | (x >= t[i + 4])
        assert np.all(b[outside, i] == 0.0)


def test_derivative_matches_differences():
    g = SplineGrid()
    x = np.random.default_rng(3).uniform(-1.4, 1.4, 200)
    _, d = bspline_basis_with_derivative(x, g)
    h = 1e-6
    fd = (bspline_basis(x + h, g) - bspline_basis(x - h, g)) / (2 * h)
    assert np.allclose(d, fd, atol=1e-6)


def test_param_count_examples():
    assert effkan_param_count(1, 1) == 11
    assert effkan_param_count(384, 1536) == 5_899_776
    layer = EffKanLayer(384, 1536, dtype=np.float32)
    assert layer.num_parameters() == 5_899_776


@pytest.mark.parametrize("shape", [(3, 4), (7, 2), (16, 9)])
def test_param_count_matches_enumeration(shape):
    layer = effkan_init(*shape, seed=0)
    assert layer.num_parameters() == effkan_param_count(*shape)


def test_zero_paths():
    rng = np.random.default_rng(4)
    layer = EffKanLayer(5, 5)
    layer.params["spline_scaler"][...] = rng.standard_normal((5, 5))
    x = rng.standard_normal((6, 5))
    assert np.array_equal(layer.forward(x), np.zeros((6, 5)))
    layer.params["base_weight"][...] = np.eye(5)
    assert np.allclose(layer.forward(x), gelu(x))


def test_init_determinism_and_zero_noise():
    a, b = effkan_init(6, 4, seed=11), effkan_init(6, 4, seed=11)
    for (ka, va), (_, vb) in zip(a.named_parameters(), b.named_parameters()):
        assert np.array_equal(va, vb), ka
    z = effkan_init(6, 4, scale_noise=0.0, seed=1)
    assert np.all(z.params["spline_coef"] == 0.0)


def test_kaiming_std():
    d_in = 100
    layer = effkan_init(d_in, 1000, seed=5)  # 10^5 draws
    target = np.sqrt(2.0 / d_in)
    assert abs(layer.params["base_weight"].std() / target - 1.0) < 0.05


def test_gradients():
    rng = np.random.default_rng(6)
    layer = effkan_init(6, 5, seed=rng)
    for r in check_module(layer, rng.standard_normal((7, 6)), "EffKan", limit=None):
        assert r.passed, r.line()
    head = effkan_init(8, 4, seed=rng, activation=False)
    for r in check_module(head, rng.standard_normal((3, 8)), "EffKanHead", limit=None):
        assert r.passed, r.line()
