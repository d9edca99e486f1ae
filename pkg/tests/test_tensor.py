import numpy as np
import pytest

from agm.tensor import (EXACT, Mode, Point, TensorField, as_mode, covector, fd, kronecker,
                        make_grid, max_abs_diff, scalar_field, zero_field)


def test_grid_is_reproducible_and_read_only():
    a, b = make_grid(3, 50, seed=7), make_grid(3, 50, seed=7)
    np.testing.assert_array_equal(a.points, b.points)
    assert a.points.shape == (50, 3)
    assert np.all(np.abs(a.points) <= 0.9)
    with pytest.raises(ValueError):
        a.points[0, 0] = 1.0
    assert not np.array_equal(a.points, make_grid(3, 50, seed=8).points)


def test_grid_bounds():
    g = make_grid(2, 30, seed=1, bounds=[(0, 1), (2, 3)])
    assert g.points[:, 0].min() >= 0 and g.points[:, 1].min() >= 2
    with pytest.raises(ValueError):
        make_grid(2, 5, bounds=[(0, 1)])
    with pytest.raises(ValueError):
        make_grid(2, 5, bounds=[(1, 0), (0, 1)])


def test_point_and_mode_validation():
    with pytest.raises(ValueError):
        Point((0.0, float("nan")))
    with pytest.raises(ValueError):
        Mode("fd", 0.0)
    with pytest.raises(ValueError):
        as_mode("spectral")
    assert as_mode(None) is EXACT and as_mode("fd").h == 1e-4


def test_field_shape_and_valence_checks():
    with pytest.raises(ValueError):
        TensorField([["x1", "0"]], 2, (1, 1))
    with pytest.raises(ValueError):
        TensorField(["x1"], 1, (0, 1))
    with pytest.raises(ValueError):
        kronecker(2) + covector(["x1", "x2"], 2)


def test_values_and_one_based_indexing():
    t = TensorField([["x1", "x2"], ["x1*x2", "3"]], 2, (1, 1))
    v = t.values([[2.0, 5.0]])
    np.testing.assert_allclose(v[0], [[2, 5], [10, 3]])
    assert str(t[2, 1]) == "x1*x2"
    np.testing.assert_allclose(t.values([2.0, 5.0]), v[0])


def test_gradient_axis_is_last_and_fd_agrees():
    t = TensorField([["x1^2*x2", "sin(x2)"], ["exp(x1)", "x1*x2^3"]], 2, (1, 1))
    x = make_grid(2, 10, seed=2).points
    exact = t.gradient(x, EXACT)
    assert exact.shape == (10, 2, 2, 2)
    np.testing.assert_allclose(exact[:, 0, 0, 0], 2 * x[:, 0] * x[:, 1])
    np.testing.assert_allclose(exact[:, 0, 0, 1], x[:, 0] ** 2)
    np.testing.assert_allclose(t.gradient(x, fd(1e-5)), exact, atol=1e-8)
    np.testing.assert_allclose(t.partial(2, x), exact[..., 1])


def test_fd_error_is_second_order():
    t = scalar_field("sin(2*x1)*exp(x2)", 2)
    x = np.array([[0.3, -0.2]])
    exact = t.gradient(x)
    e1 = np.abs(t.gradient(x, fd(1e-2)) - exact).max()
    e2 = np.abs(t.gradient(x, fd(5e-3)) - exact).max()
    assert 3.5 < e1 / e2 < 4.5


def test_arithmetic_is_symbolic():
    a = covector(["x1", "x2"], 2)
    b = 2 * a - a
    np.testing.assert_allclose(b.values([1.0, 4.0]), [1.0, 4.0])
    np.testing.assert_allclose((-a).values([1.0, 4.0]), [-1.0, -4.0])
    assert zero_field(2, (1, 2)).values([0.1, 0.2]).shape == (2, 2, 2)
    np.testing.assert_array_equal(kronecker(3).values([0, 0, 0]), np.eye(3))


def test_max_abs_diff():
    a = np.zeros((2, 3))
    b = np.zeros((2, 3))
    b[1, 2] = -0.5
    assert max_abs_diff(a, b) == (0.5, (2, 3))
    with pytest.raises(ValueError):
        max_abs_diff(a, np.zeros(3))
    val, idx = max_abs_diff([np.nan], [0.0])
    assert np.isnan(val) and idx == (1,)
