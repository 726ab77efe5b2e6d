import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hopfid.adjoint import (
    DegenerateStateError,
    assemble_l2_gradient,
    forcing_matrix,
    jacobian_A,
    nodal_sensitivities,
    pointwise_l2_gradient,
    solve_adjoint,
    solve_tangent,
    time_quadrature,
)
from hopfid.gridfn import GridFunction
from hopfid.model import ROTATION, DescriptorModel, Measurements, simulate
from hopfid.validate import duality_gap

R = 2.3


def const_model(g1, g2, r_max=R, n=11):
    return DescriptorModel(GridFunction.constant(g1, r_max, n),
                           GridFunction.constant(g2, r_max, n),
                           GridFunction.constant(0.0, r_max, n))


def test_jacobian_constant_functions():
    m = const_model(0.3, 0.7)
    np.testing.assert_allclose(jacobian_A(m, [0.4, -1.1]), 0.3 * np.eye(2) + 0.7 * ROTATION)
    np.testing.assert_allclose(jacobian_A(m, [0.0, 0.0]), 0.3 * np.eye(2) + 0.7 * ROTATION)


def test_jacobian_quadratic_example():
    g1 = GridFunction.from_function(lambda r: -r * r, 2.0, 21)
    m = DescriptorModel(g1, GridFunction.constant(0.0, 2.0, 21), GridFunction.constant(0.0, 2.0, 21))
    np.testing.assert_allclose(jacobian_A(m, [1.0, 0.0]), np.diag([-3.0, -1.0]), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0.1, 1.6), y=st.floats(0.1, 1.6))
def test_jacobian_matches_finite_differences(truth, x, y):
    xi = np.array([x, y])
    # smooth functions so the piecewise-linear kinks stay away from the stencil
    g1 = GridFunction.from_function(lambda r: 0.2 - 0.1 * r * r, R, 75)
    g2 = GridFunction.from_function(lambda r: 1.0 + 0.05 * r * r, R, 75)
    m = DescriptorModel(g1, g2, g1)
    A = jacobian_A(m, xi)
    eps = 1e-7
    fd = np.column_stack([(m.rhs(xi + eps * e) - m.rhs(xi - eps * e)) / (2 * eps)
                          for e in np.eye(2)])
    # derivative of the interpolant differs from the centered cell-crossing value by O(h)
    np.testing.assert_allclose(A, fd, atol=0.05 * g1.h + 1e-6)


def test_forcing_matrix():
    np.testing.assert_array_equal(forcing_matrix("P1"), np.eye(2))
    np.testing.assert_array_equal(forcing_matrix("p2"), ROTATION)
    with pytest.raises(ValueError):
        forcing_matrix("P3")


def test_tangent_zero_perturbation(p1_model, xi0):
    sim = simulate(p1_model, xi0, 70.0, 500)
    tan = solve_tangent(p1_model, sim.trajectory, "g1", p1_model.g1.zeros_like())
    assert np.all(tan.states == 0.0)


def test_tangent_first_order(p1_model, xi0, cubic_direction):
    T, n = 30.0, 301
    tol = 1e-11
    sim = simulate(p1_model, xi0, T, n, tol, tol)
    tan = solve_tangent(p1_model, sim.trajectory, "g1", cubic_direction, tol, tol,
                        stops=sim.times)
    errs = []
    for eps in (1e-4, 5e-5):
        pert = p1_model.replace(g1=p1_model.g1.axpy(eps, cubic_direction))
        s2 = simulate(pert, xi0, T, n, tol, tol)
        errs.append(np.abs(s2.states - sim.states - eps * tan.sample(sim.times)).max())
    assert errs[1] < 0.3 * errs[0]


def test_tangent_on_circle_radial_growth():
    # pure rotation on the unit circle: radial part of xi' obeys d/dt (xi . xi') = r^2 g'(r)
    m = const_model(0.0, 1.0)
    sim = simulate(m, [1.0, 0.0], 5.0, 51, 1e-11, 1e-11)
    gp = GridFunction.constant(0.3, R, 11)
    tan = solve_tangent(m, sim.trajectory, "g1", gp, 1e-11, 1e-11)
    xp = tan.sample(sim.times)
    radial = np.einsum("ti,ti->t", sim.states, xp)
    np.testing.assert_allclose(radial, 0.3 * sim.times, atol=1e-8)


@pytest.mark.parametrize("problem", ["P1", "P2"])
def test_adjoint_perfect_match_is_zero(problem):
    # constant amplitude and phase velocity: linear interpolation of the data is exact
    m = const_model(0.0, 0.8)
    sim = simulate(m, [1.0, 0.0], 10.0, 101, 1e-12, 1e-12)
    exact = Measurements(sim.times, np.ones(101), 0.8 * sim.times, np.zeros(101))
    adj = solve_adjoint(m, sim.trajectory, exact, problem, 1e-10, 1e-10)
    np.testing.assert_array_equal(adj.costates[-1], [0.0, 0.0])
    assert np.abs(adj.costates).max() < 1e-9
    grad = assemble_l2_gradient(m, sim.trajectory, adj, problem)
    assert grad.max_abs() < 1e-8


def test_adjoint_constant_source():
    # g1 = g2 = 0 freezes xi at xi0 and makes A = 0; the source is then constant
    m = const_model(0.0, 0.0)
    xi0 = np.array([0.6, 0.8])
    T = 4.0
    sim = simulate(m, xi0, T, 41)
    meas = Measurements(sim.times, np.full(41, 0.5), np.zeros(41), np.zeros(41))
    adj = solve_adjoint(m, sim.trajectory, meas, "P1", 1e-12, 1e-12)
    s0 = ((1.0 - 0.5) / 1.0) * xi0
    expected = s0[None, :] * (T - adj.times)[:, None]
    np.testing.assert_allclose(adj.costates, expected, atol=1e-10)


def test_degenerate_state_error():
    m = const_model(0.0, 0.0)
    sim = simulate(m, [1e-9, 0.0], 1.0, 11)
    meas = Measurements(sim.times, np.ones(11), np.zeros(11), np.zeros(11))
    with pytest.raises(DegenerateStateError):
        solve_adjoint(m, sim.trajectory, meas, "P1")


def test_mismatched_span(p1_model, xi0, meas):
    sim = simulate(p1_model, xi0, 50.0, 100)
    with pytest.raises(ValueError):
        solve_adjoint(p1_model, sim.trajectory, meas, "P1")


@pytest.mark.parametrize("problem,which", [("P1", "g1"), ("P2", "g2")])
def test_duality(problem, which, p1_model, p2_model, xi0, meas, cubic_direction):
    m = p1_model if problem == "P1" else p2_model
    sim = simulate(m, xi0, meas.T, meas.n_t, 1e-11, 1e-11)
    gap = duality_gap(m, sim.trajectory, which, cubic_direction, meas, problem,
                      1e-11, 1e-11)
    assert gap <= 1e-6


def test_riesz_consistency(p1_model, xi0, meas):
    sim = simulate(p1_model, xi0, meas.T, meas.n_t)
    adj = solve_adjoint(p1_model, sim.trajectory, meas, "P1")
    grad = assemble_l2_gradient(p1_model, sim.trajectory, adj, "P1")
    rng = np.random.default_rng(3)
    t, w = time_quadrature(sim.trajectory, adj.trajectory, extra_breaks=meas.times)
    xi = sim.trajectory.sample(t)
    lam = adj.trajectory.sample(t)
    r = np.hypot(xi[:, 0], xi[:, 1])
    for _ in range(3):
        gp = GridFunction(R, rng.normal(size=75))
        time_side = np.dot(w, np.einsum("ti,ti->t", lam, xi) * gp.eval(r))
        r_side = np.dot(grad.lumped_weights(), grad.values * gp.values)
        assert r_side == pytest.approx(time_side, rel=1e-10)


def test_pointwise_matches_assembled(p1_model, xi0, meas):
    sim = simulate(p1_model, xi0, meas.T, meas.n_t)
    adj = solve_adjoint(p1_model, sim.trajectory, meas, "P1")
    grad = assemble_l2_gradient(p1_model, sim.trajectory, adj, "P1")
    t, r, v = pointwise_l2_gradient(p1_model, sim.trajectory, adj, np.linspace(0, 70, 20001))
    sel = (r > 0.2 * R) & (r < 0.9 * R)
    np.testing.assert_allclose(v[sel], grad.eval(r[sel]), rtol=0.02)


def test_unvisited_nodes_have_zero_sensitivity(xi0, meas):
    # grid reaching well beyond the limit cycle: nodes above r° + h are never visited
    rmax, n = 4.0, 81
    g1 = GridFunction.from_function(lambda r: 0.151 * (1 - (r / R) ** 2), rmax, n)
    z = GridFunction.constant(0.0, rmax, n)
    m = DescriptorModel(g1, z, z)
    sim = simulate(m, xi0, meas.T, meas.n_t)
    adj = solve_adjoint(m, sim.trajectory, meas, "P1")
    sens = nodal_sensitivities(sim.trajectory, adj, g1)
    unvisited = g1.nodes > sim.r.max() + g1.h
    assert unvisited.sum() > 10
    assert np.all(sens[unvisited] == 0.0)
    assert np.all(sens[~unvisited][1:-1] != 0.0)
