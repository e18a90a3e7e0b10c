import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from kandiff.gradcheck import check_grad
from kandiff.kan import (
    ConvBlock,
    KanBlock,
    SplineGrid,
    bspline_basis,
    init_kan_layer,
    kan_layer_forward,
    spline_activation_eval,
)
from kandiff.tensor import DimensionError, Tensor
from kandiff.verify import naive_kan_layer

grids = st.builds(SplineGrid, t_min=st.just(-1.0), t_max=st.sampled_from([1.0, 2.5]),
                  grid_size=st.integers(1, 9), order=st.integers(1, 4))


@settings(max_examples=40, deadline=None)
@given(grids, st.integers(0, 2**31 - 1))
def test_partition_of_unity_and_nonnegativity(grid, seed):
    x = np.random.default_rng(seed).uniform(grid.t_min - 0.5, grid.t_max + 0.5, 1000)
    b = bspline_basis(Tensor(x), grid).data
    assert b.shape == (1000, grid.num_basis)
    assert np.max(np.abs(b.sum(-1) - 1.0)) < 1e-12
    assert b.min() >= -1e-15


@settings(max_examples=25, deadline=None)
@given(grids, st.integers(0, 2**31 - 1))
def test_local_support_at_most_order_plus_one(grid, seed):
    x = np.random.default_rng(seed).uniform(grid.t_min, grid.t_max, 200)
    b = bspline_basis(Tensor(x), grid).data
    assert np.all((b > 1e-14).sum(-1) <= grid.order + 1)


@pytest.mark.parametrize("grid", [SplineGrid(), SplineGrid(-2, 3, 7, 2), SplineGrid(order=1, grid_size=3)])
def test_basis_matches_scipy_design_matrix(grid, rng):
    x = rng.uniform(grid.t_min, grid.t_max, 300)
    ours = bspline_basis(Tensor(x), grid).data
    ref = BSpline.design_matrix(x, grid.knots(), grid.order).toarray()
    np.testing.assert_allclose(ours, ref, atol=1e-13)


def test_inputs_are_clamped_to_domain():
    grid = SplineGrid()
    out = bspline_basis(Tensor(np.array([-7.0, -1.0, 1.0, 9.0])), grid).data
    np.testing.assert_array_equal(out[0], out[1])
    np.testing.assert_array_equal(out[2], out[3])


def test_basis_derivative_matches_finite_differences(rng):
    grid = SplineGrid()
    x = Tensor(rng.uniform(-0.98, 0.98, 40), requires_grad=True)
    w = rng.standard_normal((40, grid.num_basis))
    assert check_grad(lambda v: bspline_basis(v, grid) * w, [x]) < 1e-7


def test_basis_gradient_zero_outside_domain():
    grid = SplineGrid()
    x = Tensor(np.array([-3.0, 2.0]), requires_grad=True)
    bspline_basis(x, grid).sum().backward()
    np.testing.assert_array_equal(x.grad, 0.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        SplineGrid(1.0, 1.0)
    with pytest.raises(ValueError):
        SplineGrid(grid_size=0)


def test_layer_matches_triple_loop_oracle(rng):
    layer = init_kan_layer(5, 4, SplineGrid(), seed=3, dtype=np.float64)
    layer.spline_weight.data = rng.uniform(0.2, 2.0, (4, 5))
    x = rng.uniform(-1.5, 1.5, (9, 5))
    out = kan_layer_forward(layer, Tensor(x)).data
    ref = naive_kan_layer(layer.coefficients.data, layer.base_weight.data, layer.spline_weight.data, layer.grid, x)
    np.testing.assert_allclose(out, ref, rtol=0, atol=1e-12)


def test_layer_equals_sum_of_edge_functions(rng):
    layer = init_kan_layer(3, 2, SplineGrid(), seed=1, dtype=np.float64)
    x = rng.uniform(-1, 1, (6, 3))
    out = kan_layer_forward(layer, Tensor(x)).data
    for q in range(2):
        col = sum(spline_activation_eval(layer.edge(q, p), Tensor(x[:, p])).data for p in range(3))
        np.testing.assert_allclose(out[:, q], col, atol=1e-13)


def test_per_edge_parameter_count():
    grid = SplineGrid(grid_size=5, order=3)
    layer = init_kan_layer(4, 6, grid, seed=0)
    total = sum(p.size for p in layer.parameters())
    assert total == 4 * 6 * (grid.grid_size + grid.order + 2)


def test_layer_rejects_wrong_width():
    layer = init_kan_layer(3, 2, seed=0)
    with pytest.raises(DimensionError):
        kan_layer_forward(layer, Tensor(np.zeros((4, 5))))


def test_layer_gradients(rng):
    layer = init_kan_layer(3, 2, SplineGrid(), seed=2, dtype=np.float64)
    x = Tensor(rng.uniform(-0.9, 0.9, (7, 3)), requires_grad=True)
    params = [x, layer.coefficients, layer.base_weight, layer.spline_weight]
    assert check_grad(lambda v, *_: kan_layer_forward(layer, v) ** 2, params) < 1e-7


def test_init_statistics():
    grid = SplineGrid()
    layer = init_kan_layer(64, 64, grid, seed=0, dtype=np.float64)
    assert abs(layer.coefficients.data.std() - 0.1 / np.sqrt(grid.grid_size)) < 0.005
    assert abs(layer.base_weight.data.std() - 1 / 8) < 0.01
    np.testing.assert_array_equal(layer.spline_weight.data, 1.0)


def test_kan_block_shape_residual_and_unbatched(rng):
    block = KanBlock(8, 3, rng=np.random.default_rng(0), dtype=np.float64)
    x = rng.standard_normal((2, 8, 5, 6))
    out = block(Tensor(x)).data
    assert out.shape == x.shape and np.all(np.isfinite(out))
    np.testing.assert_allclose(block(Tensor(x[0])).data, out[0], atol=1e-12)
    with pytest.raises(DimensionError):
        block(Tensor(np.zeros((1, 4, 5, 5))))


def test_kan_block_zero_spline_stage_is_identity_plus_residual(rng):
    block = KanBlock(4, 2, rng=np.random.default_rng(0), dtype=np.float64)
    for layer in block.layers:
        for p in layer.parameters():
            p.data[...] = 0.0
    x = rng.standard_normal((1, 4, 4, 4))
    np.testing.assert_allclose(block(Tensor(x)).data, x, atol=1e-15)


def test_conv_twin_has_comparable_budget():
    c = 32
    kan = KanBlock(c, 3, rng=np.random.default_rng(0))
    conv = ConvBlock(c, 3, rng=np.random.default_rng(0))
    nk = sum(p.size for p in kan.parameters())
    nc = sum(p.size for p in conv.parameters())
    assert 0.75 < nc / nk < 1.1


def test_single_layer_fits_sin3x_where_affine_stalls():
    from kandiff.verify import check_sin3x

    kan_mse, detail = check_sin3x()
    assert kan_mse < 1e-3, detail
