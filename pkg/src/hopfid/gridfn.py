"""Piecewise-linear functions of the state magnitude r on [0, r_max]."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

__all__ = ["BoundaryTag", "GridFunction", "h1_inner"]


@dataclass(frozen=True)
class BoundaryTag:
    """Declared boundary behaviour of a grid function.

    ``left_slope`` declares dg/dr at r = 0, ``right_value`` declares g(r_max)
    and ``right_slope`` declares dg/dr at r_max.  ``None`` means nothing is
    declared.  Tags combine linearly, so an update ``g - tau*d`` keeps the
    declarations of ``g`` when ``d`` carries homogeneous ones.
    """

    left_slope: float | None = None
    right_value: float | None = None
    right_slope: float | None = None

    def combine(self, a: float, other: "BoundaryTag", b: float) -> "BoundaryTag":
        def lin(x, y):
            if x is None or y is None:
                return None
            return a * x + b * y
        return BoundaryTag(lin(self.left_slope, other.left_slope),
                           lin(self.right_value, other.right_value),
                           lin(self.right_slope, other.right_slope))

    def scaled(self, a: float) -> "BoundaryTag":
        return BoundaryTag(*(None if v is None else a * v
                             for v in (self.left_slope, self.right_value, self.right_slope)))


NO_TAG = BoundaryTag()


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Nodal values on ``n_nodes`` equispaced points ``r_k = k*h`` of [0, r_max].

    Evaluation is linear between nodes and clamps to the last nodal value
    above ``r_max``.
    """

    r_max: float
    values: np.ndarray
    bc: BoundaryTag = NO_TAG
    _vals: list = field(init=False, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1 or len(vals) < 3:
            raise ValueError("a grid function needs at least 3 nodal values")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")
        if not np.all(np.isfinite(vals)):
            raise ValueError("nodal values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "r_max", float(self.r_max))
        object.__setattr__(self, "_vals", vals.tolist())

    # construction -------------------------------------------------------

    @classmethod
    def from_function(cls, f: Callable, r_max: float, n_nodes: int = 75,
                      bc: BoundaryTag = NO_TAG) -> "GridFunction":
        nodes = np.linspace(0.0, r_max, n_nodes)
        return cls(r_max, np.asarray(f(nodes), dtype=float) * np.ones(n_nodes), bc)

    @classmethod
    def constant(cls, c: float, r_max: float, n_nodes: int = 75,
                 bc: BoundaryTag = NO_TAG) -> "GridFunction":
        return cls(r_max, np.full(n_nodes, float(c)), bc)

    def with_values(self, values, bc: BoundaryTag | None = None) -> "GridFunction":
        return GridFunction(self.r_max, values, self.bc if bc is None else bc)

    def with_bc(self, bc: BoundaryTag) -> "GridFunction":
        return replace(self, bc=bc)

    def zeros_like(self) -> "GridFunction":
        return GridFunction(self.r_max, np.zeros(self.n_nodes))

    def hat(self, k: int) -> "GridFunction":
        """Nodal basis function of node ``k``."""
        v = np.zeros(self.n_nodes)
        v[k] = 1.0
        return GridFunction(self.r_max, v)

    # geometry -----------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self._vals)

    @property
    def h(self) -> float:
        return self.r_max / (self.n_nodes - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.n_nodes)

    def lumped_weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights: h in the interior, h/2 at the ends."""
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def same_grid(self, other: "GridFunction") -> bool:
        return self.n_nodes == other.n_nodes and math.isclose(self.r_max, other.r_max,
                                                              rel_tol=1e-14)

    def _check_grid(self, other: "GridFunction"):
        if not self.same_grid(other):
            raise ValueError("grid functions live on different grids")

    # evaluation ---------------------------------------------------------

    def eval(self, r):
        """Piecewise-linear interpolation; scalar in, scalar out."""
        if np.ndim(r) == 0:
            return self._eval_scalar(float(r))
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("grid functions are defined for r >= 0 only")
        return np.interp(r, self.nodes, self.values)

    __call__ = eval

    def _eval_scalar(self, r: float) -> float:
        if r < 0.0:
            raise ValueError("grid functions are defined for r >= 0 only")
        vals = self._vals
        x = r * (len(vals) - 1) / self.r_max
        k = int(x)
        if k >= len(vals) - 1:
            return vals[-1]
        s = x - k
        return vals[k] + s * (vals[k + 1] - vals[k])

    def derivative(self, r):
        """dg/dr of the interpolant.

        Cell slope between nodes, centered difference at interior nodes,
        one-sided second-order difference at the end nodes unless a slope is
        declared there, zero above r_max.
        """
        if np.ndim(r) == 0:
            return self._deriv_scalar(float(r))
        return np.array([self._deriv_scalar(float(x)) for x in np.ravel(r)]).reshape(np.shape(r))

    def _deriv_scalar(self, r: float) -> float:
        if r < 0.0:
            raise ValueError("grid functions are defined for r >= 0 only")
        vals = self._vals
        n = len(vals)
        h = self.r_max / (n - 1)
        x = r / h
        k = int(x)
        if k > n - 1 or (k == n - 1 and x > k):
            return 0.0
        if x == k:
            if k == 0:
                if self.bc.left_slope is not None:
                    return self.bc.left_slope
                return (-3 * vals[0] + 4 * vals[1] - vals[2]) / (2 * h)
            if k == n - 1:
                if self.bc.right_slope is not None:
                    return self.bc.right_slope
                return (3 * vals[-1] - 4 * vals[-2] + vals[-3]) / (2 * h)
            return (vals[k + 1] - vals[k - 1]) / (2 * h)
        return (vals[k + 1] - vals[k]) / h

    def value_and_slope(self, r: float) -> tuple[float, float]:
        """Fast scalar evaluation of (g(r), dg/dr) for use inside ODE right-hand sides."""
        vals = self._vals
        n = len(vals)
        x = r * (n - 1) / self.r_max
        k = int(x)
        if k >= n - 1:
            if x == n - 1:
                return vals[-1], self._deriv_scalar(r)
            return vals[-1], 0.0
        if x == k:
            return vals[k], self._deriv_scalar(r)
        dv = vals[k + 1] - vals[k]
        return vals[k] + (x - k) * dv, dv * (n - 1) / self.r_max

    def grad_wrt_state(self, xi) -> np.ndarray:
        """Gradient of ``g(|xi|)`` with respect to the 2-state ``xi``."""
        xi = np.asarray(xi, dtype=float)
        r = math.hypot(xi[0], xi[1])
        if r == 0.0:
            return np.zeros(2)
        return self._deriv_scalar(r) * xi / r

    def boundary_slopes(self) -> tuple[float, float]:
        """One-sided second-order slopes at both ends, ignoring declarations."""
        v = self.values
        h = self.h
        return ((-3 * v[0] + 4 * v[1] - v[2]) / (2 * h),
                (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h))

    # algebra ------------------------------------------------------------

    def axpy(self, a: float, other: "GridFunction") -> "GridFunction":
        """Return ``self + a*other``; boundary tags combine linearly."""
        self._check_grid(other)
        return GridFunction(self.r_max, self.values + a * other.values,
                            self.bc.combine(1.0, other.bc, a))

    def __add__(self, other):
        if isinstance(other, GridFunction):
            return self.axpy(1.0, other)
        return GridFunction(self.r_max, self.values + float(other))

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            return self.axpy(-1.0, other)
        return GridFunction(self.r_max, self.values - float(other))

    def __mul__(self, a):
        a = float(a)
        return GridFunction(self.r_max, a * self.values, self.bc.scaled(a))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def l2_inner(self, other: "GridFunction") -> float:
        self._check_grid(other)
        return float(np.sum(self.lumped_weights() * self.values * other.values))

    # serialization ------------------------------------------------------

    def to_csv(self, path, description: str = "grid function", value_name: str = "value"):
        from .csvio import write_columns
        write_columns(path, {"r": self.nodes, value_name: self.values}, description)

    @classmethod
    def from_csv(cls, path, bc: BoundaryTag = NO_TAG) -> "GridFunction":
        from .csvio import read_columns
        cols = read_columns(path)
        names = list(cols)
        r = cols[names[0]]
        vals = cols[names[1]]
        if len(r) < 3 or r[0] != 0.0:
            raise ValueError(f"{path}: expected nodes starting at r = 0")
        if not np.allclose(np.diff(r), r[1] - r[0], rtol=1e-9, atol=1e-12):
            raise ValueError(f"{path}: nodes are not equispaced")
        return cls(float(r[-1]), vals, bc)


def h1_inner(z1: GridFunction, z2: GridFunction, ell: float) -> float:
    """Discrete H1 inner product ``int z1 z2 + ell^2 z1' z2' dr``.

    The mass term uses the trapezoidal rule; the stiffness term is exact for
    piecewise-linear functions (constant slope per cell).  This is the inner
    product for which the ghost-node Helmholtz solve returns Riesz
    representers.
    """
    z1._check_grid(z2)
    if ell < 0:
        raise ValueError("length scale must be nonnegative")
    h = z1.h
    mass = np.sum(z1.lumped_weights() * z1.values * z2.values)
    stiff = np.sum(np.diff(z1.values) * np.diff(z2.values)) / h
    return float(mass + ell * ell * stiff)
