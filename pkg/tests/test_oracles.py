import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcsca.errors import InvalidParameter, NumericalFailure
from dcsca.numerics import soft_threshold
from dcsca.oracles import (
    GridSpec,
    fd_gradient,
    grid_min_1d,
    scalar_capped_prox_oracle,
    scalar_capped_prox_oracle_batch,
    zoom_min_1d,
)


def test_gridspec_validation():
    with pytest.raises(InvalidParameter):
        GridSpec(1.0, 1.0, 10)
    with pytest.raises(InvalidParameter):
        GridSpec(0.0, 1.0, 1)


def test_fd_gradient_quadratic_and_linear():
    g = fd_gradient(lambda x: 0.5 * float(x @ x), np.array([1.0, 2.0]))
    np.testing.assert_allclose(g, [1.0, 2.0], atol=1e-8)
    c = np.array([0.5, -2.0, 3.0])
    np.testing.assert_allclose(fd_gradient(lambda x: float(c @ x), np.zeros(3)), c, atol=1e-9)


def test_fd_gradient_matrix_shape():
    x = np.arange(6.0).reshape(2, 3)
    g = fd_gradient(lambda m: float(np.sum(m**2)), x)
    assert g.shape == x.shape
    np.testing.assert_allclose(g, 2 * x, atol=1e-6)


def test_fd_gradient_error_is_second_order():
    f = lambda x: float(np.sin(x[0]) * np.exp(x[1]))
    x = np.array([0.3, 0.2])
    exact = np.array([np.cos(0.3) * np.exp(0.2), np.sin(0.3) * np.exp(0.2)])
    errs = [np.abs(fd_gradient(f, x, step=h) - exact).max() for h in (1e-2, 5e-3, 2.5e-3)]
    # halving the step divides the error by about four
    assert 3.0 < errs[0] / errs[1] < 5.0
    assert 3.0 < errs[1] / errs[2] < 5.0


def test_fd_gradient_non_finite():
    with pytest.raises(NumericalFailure):
        fd_gradient(lambda x: np.inf, np.zeros(2))
    with pytest.raises(InvalidParameter):
        fd_gradient(lambda x: 0.0, np.zeros(2), step=0.0)


def test_grid_min_examples():
    x, v = grid_min_1d(lambda g: (g - 0.3) ** 2, GridSpec(0, 1, 10001))
    assert x == pytest.approx(0.3, abs=1e-4)
    x, _ = grid_min_1d(lambda g: g, GridSpec(-1, 1, 11))
    assert x == -1
    # tie: constant function picks the smallest argument
    x, _ = grid_min_1d(lambda g: 0.0, GridSpec(0, 1, 5))
    assert x == 0.0


def test_grid_min_non_finite():
    with pytest.raises(NumericalFailure):
        grid_min_1d(lambda g: np.nan, GridSpec(0, 1, 3))


@given(st.floats(-2, 2), st.floats(0.1, 10))
def test_grid_brackets_convex_minimiser(center, curv):
    grid = GridSpec(-3, 3, 601)
    x, _ = grid_min_1d(lambda g: curv * (g - center) ** 2, grid, vectorized=False)
    assert abs(x - center) <= (grid.hi - grid.lo) / (grid.points - 1)


def test_zoom_min():
    x, _ = zoom_min_1d(lambda g: (g - 0.123456789) ** 2, 0, 1, tol=1e-12)
    assert x == pytest.approx(0.123456789, abs=1e-10)


def test_capped_prox_oracle_examples():
    assert scalar_capped_prox_oracle(0.0, 1.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-8)
    # frozen reference consumed by the capped-l1 tests: u=2.5, w=1, mu=1, theta=1
    assert scalar_capped_prox_oracle(2.5, 1.0, 1.0, 1.0) == pytest.approx(2.5, abs=1e-7)
    # huge cap: plain soft thresholding at mu / w
    assert scalar_capped_prox_oracle(1.7, 2.0, 1.0, 1e3, points=200_001) == pytest.approx(
        soft_threshold(1.7, 0.5), abs=1e-7
    )


def test_capped_prox_batch_matches_dense(rng):
    u = rng.uniform(-4, 4, 20)
    w = rng.uniform(0.2, 5, 20)
    mu = rng.uniform(0.1, 2, 20)
    theta = rng.uniform(0.2, 2, 20)
    xb, vb = scalar_capped_prox_oracle_batch(u, w, mu, theta)
    for i in range(20):
        xd = scalar_capped_prox_oracle(u[i], w[i], mu[i], theta[i])
        vd = 0.5 * w[i] * (xd - u[i]) ** 2 + mu[i] * min(abs(xd), theta[i])
        assert vb[i] <= vd + 1e-12
