"""Tangent and adjoint solves for the amplitude (P1) and phase (P2) problems.

For a perturbation g' of g1 (P1) or g2 (P2) the tangent system is

    d/dt xi' = A(xi) xi' + B xi g'(r),     xi'(0) = 0,

with B = I for g1 and B = J for g2.  The adjoint runs backward from
xi*(T) = 0 with

    -d/dt xi* = A(xi)^T xi* + s(t),

where s = ((r - r~)/r) xi for P1 and s = (sin(theta - theta~)/r^2) J xi for
P2, so that  int s^T xi' dt = int xi*^T B xi g'(r) dt.  The right-hand side
of that identity is scattered onto the hat functions of the r-grid to give
the nodal sensitivities of the cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gridfn import GridFunction
from .model import ROTATION, DescriptorModel, Measurements
from .ode import Trajectory, integrate_backward, integrate_forward

__all__ = [
    "DegenerateStateError",
    "AdjointTrajectory",
    "jacobian_A",
    "forcing_matrix",
    "adjoint_source",
    "solve_tangent",
    "solve_adjoint",
    "time_quadrature",
    "nodal_sensitivities",
    "assemble_l2_gradient",
    "pointwise_l2_gradient",
]

PROBLEMS = ("P1", "P2")


class DegenerateStateError(ValueError):
    """The forward state came too close to the origin for the adjoint source."""


def _problem(problem: str) -> str:
    p = problem.upper()
    if p not in PROBLEMS:
        raise ValueError(f"problem must be one of {PROBLEMS}, got {problem!r}")
    return p


def forcing_matrix(problem: str) -> np.ndarray:
    """B = I when g1 is perturbed (P1), B = J when g2 is perturbed (P2)."""
    return np.eye(2) if _problem(problem) == "P1" else ROTATION


def _jac_entries(g1s, g2s, a1, a2):
    r = math.hypot(a1, a2)
    g1, d1 = g1s(r)
    g2, d2 = g2s(r)
    if r == 0.0:
        return g1, -g2, g2, g1
    p11 = a1 * a1 / r
    p12 = a1 * a2 / r
    p22 = a2 * a2 / r
    return (g1 + d1 * p11 - d2 * p12,
            d1 * p12 - g2 - d2 * p22,
            d1 * p12 + g2 + d2 * p11,
            g1 + d1 * p22 + d2 * p12)


def jacobian_A(m: DescriptorModel, xi) -> np.ndarray:
    """Jacobian of the vector field, g1 I + I xi grad(g1)^T + g2 J + J xi grad(g2)^T."""
    a11, a12, a21, a22 = _jac_entries(m.g1.value_and_slope, m.g2.value_and_slope,
                                      float(xi[0]), float(xi[1]))
    return np.array([[a11, a12], [a21, a22]])


def adjoint_source(m: DescriptorModel, traj: Trajectory, meas: Measurements,
                   problem: str, r_min: float | None = None):
    """Return ``s(t)``, the data-misfit forcing of the adjoint system."""
    p = _problem(problem)
    if r_min is None:
        r_min = 1e-6 * m.r_circle
    at = traj.at

    if p == "P1":
        r_at = meas.r_at

        def source(t):
            xi = at(t)
            r = math.hypot(xi[0], xi[1])
            if r < r_min:
                raise DegenerateStateError(f"|xi(t)| = {r:.3g} below floor at t = {t:.6g}")
            return ((r - r_at(t)) / r) * xi
    else:
        th_at = meas.theta_at

        def source(t):
            xi = at(t)
            a1 = xi[0]
            a2 = xi[1]
            r2 = a1 * a1 + a2 * a2
            if r2 < r_min * r_min:
                raise DegenerateStateError(f"|xi(t)| below floor at t = {t:.6g}")
            c = math.sin(math.atan2(a2, a1) - th_at(t)) / r2
            return np.array([-c * a2, c * a1])
    return source


def solve_tangent(m: DescriptorModel, traj: Trajectory, which: str, g_prime: GridFunction,
                  rel_tol: float = 1e-8, abs_tol: float = 1e-8, *, stops=None) -> Trajectory:
    """Linearized response xi'(t) to the perturbation ``g_prime`` of g1 or g2."""
    which = which.lower()
    if which not in ("g1", "g2"):
        raise ValueError("which must be 'g1' or 'g2'")
    rot = which == "g2"
    g1s = m.g1.value_and_slope
    g2s = m.g2.value_and_slope
    gp = g_prime._eval_scalar
    at = traj.at
    array = np.array

    def rhs(t, y):
        xi = at(t)
        a1 = float(xi[0])
        a2 = float(xi[1])
        a11, a12, a21, a22 = _jac_entries(g1s, g2s, a1, a2)
        f = gp(math.hypot(a1, a2))
        y1 = y[0]
        y2 = y[1]
        if rot:
            return array([a11 * y1 + a12 * y2 - f * a2, a21 * y1 + a22 * y2 + f * a1])
        return array([a11 * y1 + a12 * y2 + f * a1, a21 * y1 + a22 * y2 + f * a2])

    return integrate_forward(rhs, np.zeros(2), (traj.t0, traj.t1), rel_tol, abs_tol,
                             stops=stops)


@dataclass(frozen=True)
class AdjointTrajectory:
    """Costate xi*(t) on [0, T] for the given problem; xi*(T) = 0."""

    trajectory: Trajectory
    problem: str

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def costates(self) -> np.ndarray:
        return self.trajectory.states


def solve_adjoint(m: DescriptorModel, traj: Trajectory, meas: Measurements, problem: str,
                  rel_tol: float = 1e-8, abs_tol: float = 1e-8,
                  r_min: float | None = None) -> AdjointTrajectory:
    """Integrate the adjoint system backward from xi*(T) = 0.

    The integrator steps onto every measurement time because the linearly
    interpolated data make the source kinked there.
    """
    p = _problem(problem)
    if abs(traj.t1 - meas.T) > 1e-9 * meas.T or traj.t0 != 0.0:
        raise ValueError("trajectory and measurements must share [0, T]")
    source = adjoint_source(m, traj, meas, p, r_min)
    g1s = m.g1.value_and_slope
    g2s = m.g2.value_and_slope
    at = traj.at
    array = np.array

    def rhs(t, y):
        xi = at(t)
        a11, a12, a21, a22 = _jac_entries(g1s, g2s, float(xi[0]), float(xi[1]))
        s = source(t)
        y1 = y[0]
        y2 = y[1]
        # physical-time rhs of  -xi*' = A^T xi* + s
        return array([-(a11 * y1 + a21 * y2 + s[0]), -(a12 * y1 + a22 * y2 + s[1])])

    adj = integrate_backward(rhs, np.zeros(2), (traj.t1, traj.t0), rel_tol, abs_tol,
                             stops=meas.times)
    return AdjointTrajectory(adj, p)


def _gauss_nodes(breaks: np.ndarray, n_sub: int, n_gauss: int):
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    fine = np.linspace(breaks[:-1, None], breaks[1:, None], n_sub + 1, axis=1)[..., 0]
    a = fine[:, :-1].ravel()
    b = fine[:, 1:].ravel()
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    t = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return t, wt


def time_quadrature(*trajectories: Trajectory, extra_breaks=None, n_sub: int = 4,
                    n_gauss: int = 4):
    """Composite Gauss-Legendre nodes and weights on the union of all step grids.

    Between merged break points every Hermite dense output is a cubic
    polynomial, so products of a few of them are integrated almost exactly.
    """
    parts = [tr.times for tr in trajectories]
    if extra_breaks is not None:
        parts.append(np.asarray(extra_breaks, dtype=float))
    t0 = max(tr.t0 for tr in trajectories)
    t1 = min(tr.t1 for tr in trajectories)
    breaks = np.unique(np.concatenate(parts))
    breaks = breaks[(breaks >= t0) & (breaks <= t1)]
    if len(breaks) < 2:
        raise ValueError("empty trajectory")
    return _gauss_nodes(breaks, n_sub, n_gauss)


def scatter_to_hats(r: np.ndarray, contrib: np.ndarray, template: GridFunction) -> np.ndarray:
    """Deposit ``contrib`` (one value per sample) on the hat functions evaluated at ``r``."""
    n = template.n_nodes
    x = np.asarray(r) / template.h
    k = np.floor(x).astype(int)
    s = x - k
    beyond = k >= n - 1
    k[beyond] = n - 2
    s[beyond] = 1.0
    out = np.bincount(k, weights=contrib * (1.0 - s), minlength=n)
    out += np.bincount(k + 1, weights=contrib * s, minlength=n)
    return out


def _pairing_samples(traj: Trajectory, adj: AdjointTrajectory, extra_breaks=None,
                     n_sub: int = 4, n_gauss: int = 4):
    t, w = time_quadrature(traj, adj.trajectory, extra_breaks=extra_breaks,
                           n_sub=n_sub, n_gauss=n_gauss)
    xi = traj.sample(t)
    lam = adj.trajectory.sample(t)
    if adj.problem == "P1":
        c = lam[:, 0] * xi[:, 0] + lam[:, 1] * xi[:, 1]
    else:
        # lam^T J xi
        c = -lam[:, 0] * xi[:, 1] + lam[:, 1] * xi[:, 0]
    return t, w, np.hypot(xi[:, 0], xi[:, 1]), c


def nodal_sensitivities(traj: Trajectory, adj: AdjointTrajectory, template: GridFunction,
                        extra_breaks=None, n_sub: int = 4, n_gauss: int = 4) -> np.ndarray:
    """dJ/dg_k = int xi*^T B xi phi_k(r(t)) dt for every node k."""
    _, w, r, c = _pairing_samples(traj, adj, extra_breaks, n_sub, n_gauss)
    return scatter_to_hats(r, w * c, template)


def assemble_l2_gradient(m: DescriptorModel, traj: Trajectory, adj: AdjointTrajectory,
                         problem: str, template: GridFunction | None = None,
                         **quad) -> GridFunction:
    """L2(I) gradient on the nodal grid: nodal sensitivities over lumped weights."""
    if _problem(problem) != adj.problem:
        raise ValueError("adjoint was solved for a different problem")
    if template is None:
        template = m.g1
    sens = nodal_sensitivities(traj, adj, template, **quad)
    return GridFunction(template.r_max, sens / template.lumped_weights())


def pointwise_l2_gradient(m: DescriptorModel, traj: Trajectory, adj: AdjointTrajectory,
                          times=None, rel_floor: float = 1e-8):
    """Pointwise gradient r xi*^T B xi / (xi . f(xi)) at sample times.

    Follows from dt = r dr / (xi . f) on a trajectory whose amplitude is
    monotone in time.  Samples where the denominator g1(r) r^2 is below
    ``rel_floor`` times its maximum are dropped.  Returns ``(t, r, value)``.
    """
    if times is None:
        times = traj.times
    times = np.asarray(times, dtype=float)
    xi = traj.sample(times)
    lam = adj.trajectory.sample(times)
    B = forcing_matrix(adj.problem)
    num = np.einsum("ti,ij,tj->t", lam, B, xi)
    r = np.hypot(xi[:, 0], xi[:, 1])
    den = m.g1.eval(r) * r * r
    keep = np.abs(den) > rel_floor * np.max(np.abs(den))
    return times[keep], r[keep], r[keep] * num[keep] / den[keep]
