import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hopfid.gridfn import NO_TAG, BoundaryTag, GridFunction, h1_inner

R = 2.3


def test_constant_eval():
    g = GridFunction.constant(0.7, R, 75)
    for r in (0.0, 0.5, 1.234, R, 5.0):
        assert g(r) == pytest.approx(0.7, abs=1e-15)


def test_linear_reproduced_mid_cell():
    g = GridFunction.from_function(lambda r: r, R, 75)
    mids = 0.5 * (g.nodes[:-1] + g.nodes[1:])
    np.testing.assert_allclose(g.eval(mids), mids, rtol=0, atol=1e-14)


def test_landau_guess_value():
    g = GridFunction.from_function(lambda r: 0.151 - 0.151 * (r / R) ** 2, R, 75)
    assert g(1.15) == pytest.approx(0.11325, abs=0.151 * g.h**2)


def test_clamp_and_negative():
    g = GridFunction.from_function(lambda r: r * r, R, 11)
    assert g(R + 1.0) == g.values[-1]
    with pytest.raises(ValueError):
        g(-0.1)
    with pytest.raises(ValueError):
        g.eval(np.array([0.1, -1.0]))


def test_grid_geometry():
    g = GridFunction.constant(0.0, R, 75)
    assert g.n_nodes == 75 and g.h == pytest.approx(R / 74)
    w = g.lumped_weights()
    assert w[0] == pytest.approx(g.h / 2) and w[5] == pytest.approx(g.h)
    assert w.sum() == pytest.approx(R)


def test_validation():
    with pytest.raises(ValueError):
        GridFunction(R, np.zeros(2))
    with pytest.raises(ValueError):
        GridFunction(0.0, np.zeros(5))
    with pytest.raises(ValueError):
        GridFunction(R, np.array([0.0, np.nan, 1.0]))


def test_derivative_constant_and_linear():
    c = GridFunction.constant(3.0, R, 21)
    assert all(c.derivative(r) == 0.0 for r in np.linspace(0, R, 13))
    lin = GridFunction.from_function(lambda r: r, R, 21)
    mids = 0.5 * (lin.nodes[:-1] + lin.nodes[1:])
    np.testing.assert_allclose(lin.derivative(mids), 1.0, rtol=1e-12)


def test_derivative_quadratic_at_nodes():
    g = GridFunction.from_function(lambda r: r * r, R, 75)
    k = np.arange(1, 74)
    np.testing.assert_allclose(g.derivative(g.nodes[k]), 2 * g.nodes[k], rtol=1e-12)


def test_derivative_declared_slopes():
    g = GridFunction.from_function(lambda r: 1 + r, R, 21, BoundaryTag(left_slope=0.0))
    assert g.derivative(0.0) == 0.0
    assert g.derivative(R) == pytest.approx(1.0)
    g2 = g.with_bc(BoundaryTag(left_slope=0.0, right_slope=0.224))
    assert g2.derivative(R) == 0.224
    assert g.derivative(R + 0.1) == 0.0


def test_value_and_slope_matches_components():
    g = GridFunction.from_function(np.sin, R, 31, BoundaryTag(left_slope=0.0))
    for r in np.linspace(0, R + 0.2, 57):
        v, d = g.value_and_slope(float(r))
        assert v == pytest.approx(g(float(r)), abs=1e-15)
        assert d == pytest.approx(g.derivative(float(r)), abs=1e-12)


def test_grad_wrt_state():
    g = GridFunction.from_function(lambda r: r * r, R, 75)
    xi = np.array([g.nodes[30] * 0.6, g.nodes[30] * 0.8])
    np.testing.assert_allclose(g.grad_wrt_state(xi), 2 * xi, rtol=1e-12)
    np.testing.assert_array_equal(g.grad_wrt_state([0.0, 0.0]), [0.0, 0.0])
    c = GridFunction.constant(2.0, R, 11)
    np.testing.assert_array_equal(c.grad_wrt_state([0.3, -0.4]), [0.0, 0.0])


def test_h1_inner_examples():
    one = GridFunction.constant(1.0, R, 75)
    assert h1_inner(one, one, 3.0) == pytest.approx(R)
    z = GridFunction.from_function(lambda r: r, 1.0, 101)
    assert h1_inner(z, z, 0.0) == pytest.approx(1 / 3, abs=z.h**2)
    even = GridFunction.from_function(lambda r: np.cos(2 * np.pi * r), 1.0, 101)
    odd = GridFunction.from_function(lambda r: r - 0.5, 1.0, 101)
    assert abs(h1_inner(even, odd, 0.0)) < 1e-12


def test_h1_inner_grid_mismatch():
    with pytest.raises(ValueError):
        h1_inner(GridFunction.constant(1.0, R, 75), GridFunction.constant(1.0, R, 74), 1.0)


def test_axpy_combines_tags():
    a = GridFunction.constant(1.0, R, 11, BoundaryTag(left_slope=0.0, right_slope=0.2))
    b = GridFunction.constant(2.0, R, 11, BoundaryTag(left_slope=0.0, right_slope=0.0))
    c = a.axpy(-3.0, b)
    assert c.bc == BoundaryTag(left_slope=0.0, right_slope=0.2)
    np.testing.assert_allclose(c.values, -5.0)
    assert a.axpy(1.0, GridFunction.constant(0.0, R, 11)).bc.right_slope is None


def test_csv_roundtrip(tmp_path):
    g = GridFunction.from_function(np.cos, R, 75)
    p = tmp_path / "g.csv"
    g.to_csv(p, value_name="grad_value")
    first = p.read_text().splitlines()[:2]
    assert first[0].startswith("#") and first[1] == "r,grad_value"
    back = GridFunction.from_csv(p)
    np.testing.assert_array_equal(back.values, g.values)
    assert back.r_max == pytest.approx(R)


def test_values_read_only():
    g = GridFunction.constant(1.0, R, 5)
    with pytest.raises(ValueError):
        g.values[0] = 2.0


vals = arrays(np.float64, 12, elements=st.floats(-10, 10))


@settings(max_examples=50, deadline=None)
@given(a=vals, b=vals, c=vals, ell=st.floats(0.0, 3.0), s=st.floats(-5, 5))
def test_h1_inner_symmetric_bilinear_positive(a, b, c, ell, s):
    za, zb, zc = (GridFunction(R, v) for v in (a, b, c))
    assert h1_inner(za, zb, ell) == pytest.approx(h1_inner(zb, za, ell), rel=1e-12, abs=1e-9)
    lhs = h1_inner(za.axpy(s, zb), zc, ell)
    rhs = h1_inner(za, zc, ell) + s * h1_inner(zb, zc, ell)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-7)
    assert h1_inner(za, za, ell) >= 0.0


@settings(max_examples=50, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), r=st.floats(0, R))
def test_affine_reproduced(a, b, r):
    g = GridFunction.from_function(lambda x: a + b * x, R, 17)
    assert g(r) == pytest.approx(a + b * r, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-2, 2), y=st.floats(-2, 2))
def test_state_gradient_parallel(x, y):
    g = GridFunction.from_function(np.sin, R, 31)
    xi = np.array([x, y])
    r = np.hypot(x, y)
    grad = g.grad_wrt_state(xi)
    if r == 0:
        assert np.all(grad == 0)
        return
    assert abs(grad[0] * y - grad[1] * x) <= 1e-12 * max(1.0, r)
    assert np.hypot(*grad) == pytest.approx(abs(g.derivative(r)), abs=1e-12)
