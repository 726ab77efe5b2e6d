"""Helmholtz smoothing on the r-grid: Sobolev gradients and the direct g3 fit.

Solves (1 - ell^2 d^2/dr^2) u = f on (0, r°) with second-order centered
differences.  Neumann conditions use a ghost node, which makes the scheme
identical to lumped-mass linear finite elements; the discrete solution is
then the Riesz representer of f under :func:`hopfid.gridfn.h1_inner`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .gridfn import BoundaryTag, GridFunction
from .adjoint import scatter_to_hats
from .model import Measurements
from .ode import Trajectory

__all__ = [
    "Neumann",
    "Dirichlet",
    "solve_helmholtz",
    "sobolev_gradient",
    "smooth_g3",
    "bin_a3_measurements",
]


@dataclass(frozen=True)
class Neumann:
    slope: float = 0.0


@dataclass(frozen=True)
class Dirichlet:
    value: float = 0.0


def solve_helmholtz(rhs: GridFunction, ell: float, bc_left=Neumann(),
                    bc_right=Dirichlet()) -> GridFunction:
    """Solve (1 - ell^2 u'') = rhs with the given end conditions.

    The left end supports a Neumann condition only (the origin is a
    symmetry point of the amplitude).  The result carries a boundary tag
    matching the imposed conditions.
    """
    if not ell > 0:
        raise ValueError("ell must be positive")
    if not isinstance(bc_left, Neumann):
        raise ValueError("only a Neumann condition is supported at r = 0")
    n = rhs.n_nodes
    h = rhs.h
    c = (ell / h) ** 2
    f = rhs.values.astype(float).copy()

    # banded storage: row 0 super-diagonal, row 1 diagonal, row 2 sub-diagonal
    ab = np.zeros((3, n))
    ab[1, :] = 1.0 + 2.0 * c
    ab[0, 1:] = -c
    ab[2, :-1] = -c

    # ghost node u[-1] = u[1] - 2 h slope
    ab[0, 1] = -2.0 * c
    f[0] -= 2.0 * c * h * bc_left.slope

    if isinstance(bc_right, Dirichlet):
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
        f[-1] = bc_right.value
        tag = BoundaryTag(left_slope=bc_left.slope, right_value=bc_right.value)
    elif isinstance(bc_right, Neumann):
        # ghost node u[n] = u[n-2] + 2 h slope
        ab[2, -2] = -2.0 * c
        f[-1] += 2.0 * c * h * bc_right.slope
        tag = BoundaryTag(left_slope=bc_left.slope, right_slope=bc_right.slope)
    else:
        raise ValueError("bc_right must be Neumann or Dirichlet")

    u = solve_banded((1, 1), ab, f)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("Helmholtz system is singular")
    if isinstance(bc_right, Dirichlet):
        u[-1] = bc_right.value
    return GridFunction(rhs.r_max, u, tag)


def sobolev_gradient(l2_grad: GridFunction, ell: float, problem: str) -> GridFunction:
    """H1 gradient: Neumann at the origin; zero value (P1) or zero slope (P2) at r°."""
    p = problem.upper()
    if p == "P1":
        return solve_helmholtz(l2_grad, ell, Neumann(0.0), Dirichlet(0.0))
    if p == "P2":
        return solve_helmholtz(l2_grad, ell, Neumann(0.0), Neumann(0.0))
    raise ValueError(f"unknown problem {problem!r}")


def smooth_g3(a3_on_grid: GridFunction, ell: float) -> GridFunction:
    """Direct H1 fit of the slaved amplitude, pinned to the data at r°."""
    g3 = solve_helmholtz(a3_on_grid, ell, Neumann(0.0),
                         Dirichlet(float(a3_on_grid.values[-1])))
    return g3.with_bc(BoundaryTag())


def bin_a3_measurements(r, meas: Measurements, template: GridFunction) -> GridFunction:
    """Time-weighted average of a~_Delta deposited on the hat functions at r(t).

    ``r`` is either a trajectory (sampled at the measurement times) or the
    amplitudes at those times.  Each sample carries its trapezoidal time
    weight, which is the weighting of the cost written over r.  Nodes that
    receive no weight take the value of the nearest filled node.
    """
    if isinstance(r, Trajectory):
        xi = r.sample(meas.times)
        r = np.hypot(xi[:, 0], xi[:, 1])
    r = np.asarray(r, dtype=float)
    if r.shape != meas.times.shape:
        raise ValueError("r must be sampled at the measurement times")
    w = np.full(meas.n_t, meas.dt)
    w[0] = w[-1] = 0.5 * meas.dt
    num = scatter_to_hats(r, w * meas.a_delta_tilde, template)
    den = scatter_to_hats(r, w, template)
    filled = den > 1e-14 * den.max() if den.max() > 0 else np.zeros_like(den, bool)
    if not np.any(filled):
        raise ValueError("no measurement falls on the grid")
    vals = np.empty(template.n_nodes)
    vals[filled] = num[filled] / den[filled]
    idx = np.flatnonzero(filled)
    empty = np.flatnonzero(~filled)
    if len(empty):
        nearest = idx[np.abs(empty[:, None] - idx[None, :]).argmin(axis=1)]
        vals[empty] = vals[nearest]
    return GridFunction(template.r_max, vals)
