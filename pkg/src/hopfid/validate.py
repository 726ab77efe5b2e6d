"""Gradient checks: kappa ratio, per-node finite differences, tangent/adjoint duality."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .adjoint import (
    adjoint_source,
    nodal_sensitivities,
    solve_adjoint,
    solve_tangent,
    time_quadrature,
)
from .gridfn import GridFunction
from .model import DescriptorModel, Measurements, simulate
from .ode import Trajectory
from .optimize import IdentificationConfig, j1_from_samples, j2_from_samples

__all__ = [
    "DegenerateDirectionError",
    "GradientProbe",
    "kappa",
    "KappaRow",
    "kappa_sweep",
    "plateau",
    "fd_node_gradient",
    "duality_gap",
]


class DegenerateDirectionError(ValueError):
    """The adjoint directional derivative along g' is numerically zero."""


def _which(problem: str) -> str:
    p = problem.upper()
    if p == "P1":
        return "g1"
    if p == "P2":
        return "g2"
    raise ValueError(f"unknown problem {problem!r}")


def _perturbed(m: DescriptorModel, problem: str, g_prime: GridFunction, eps: float):
    w = _which(problem)
    g = getattr(m, w)
    return m.replace(**{w: g.axpy(eps, g_prime)})


class GradientProbe:
    """Cost and adjoint sensitivities of one (model, data, problem) triple.

    Every forward solve uses the same integrator settings, so cost
    differences are not polluted by changes of the step sequence beyond
    those caused by the perturbation itself.
    """

    def __init__(self, problem: str, m: DescriptorModel, meas: Measurements,
                 cfg: IdentificationConfig | None = None):
        self.problem = problem.upper()
        _which(self.problem)
        self.m = m
        self.meas = meas
        self.cfg = cfg or IdentificationConfig(T=meas.T, n_t=meas.n_t)
        self.xi0 = self.cfg.initial_state(m.r_circle)
        self._sens = None
        self._J0 = None

    def cost(self, m: DescriptorModel | None = None) -> float:
        m = self.m if m is None else m
        sim = simulate(m, self.xi0, self.meas.T, self.meas.n_t,
                       self.cfg.rel_tol, self.cfg.abs_tol)
        if self.problem == "P1":
            return j1_from_samples(sim.r, self.meas)
        return j2_from_samples(sim.theta, self.meas)

    @property
    def base_cost(self) -> float:
        if self._J0 is None:
            self._J0 = self.cost()
        return self._J0

    @property
    def sensitivities(self) -> np.ndarray:
        """Nodal sensitivities dJ/dg_k (before division by the lumped weights)."""
        if self._sens is None:
            sim = simulate(self.m, self.xi0, self.meas.T, self.meas.n_t,
                           self.cfg.rel_tol, self.cfg.abs_tol)
            adj = solve_adjoint(self.m, sim.trajectory, self.meas, self.problem,
                                self.cfg.rel_tol, self.cfg.abs_tol)
            template = getattr(self.m, _which(self.problem))
            self._sens = nodal_sensitivities(sim.trajectory, adj, template)
        return self._sens

    def directional(self, g_prime: GridFunction) -> float:
        """Adjoint estimate of dJ[g; g'], the trapezoidal int grad_L2 J g' dr."""
        return float(np.dot(self.sensitivities, g_prime.values))

    def fd(self, g_prime: GridFunction, eps: float) -> float:
        return (self.cost(_perturbed(self.m, self.problem, g_prime, eps))
                - self.base_cost) / eps


def kappa(problem: str, m: DescriptorModel, g_prime: GridFunction, eps: float,
          meas: Measurements, cfg: IdentificationConfig | None = None,
          probe: GradientProbe | None = None) -> float:
    """One-sided finite-difference derivative over the adjoint derivative along g'."""
    if eps == 0:
        raise ValueError("eps must be nonzero")
    probe = probe or GradientProbe(problem, m, meas, cfg)
    den = probe.directional(g_prime)
    if abs(den) < 1e-30:
        raise DegenerateDirectionError(f"adjoint directional derivative {den:.3g}")
    return probe.fd(g_prime, eps) / den


@dataclass(frozen=True)
class KappaRow:
    epsilon: float
    n_t: int
    kappa: float

    @property
    def log10_abs_kappa_minus_1(self) -> float:
        d = abs(self.kappa - 1.0)
        return math.log10(d) if d > 0 else -math.inf


MeasurementSource = Union[Measurements, Callable[[int], Measurements]]


def kappa_sweep(problem: str, m: DescriptorModel, g_prime: GridFunction,
                eps_list: Sequence[float], n_t_list: Sequence[int],
                meas: MeasurementSource, cfg: IdentificationConfig | None = None
                ) -> list[KappaRow]:
    """Kappa over the grid eps_list x n_t_list, sorted by (n_t, eps).

    ``meas`` is either one measurement set (resampled to each N_T) or a
    callable returning measurements for a given N_T.
    """
    rows = []
    for n_t in sorted(set(int(n) for n in n_t_list)):
        if callable(meas):
            data = meas(n_t)
        else:
            data = meas if meas.n_t == n_t else meas.resample(n_t)
        c = cfg or IdentificationConfig()
        c = IdentificationConfig(**{**c.__dict__, "T": data.T, "n_t": n_t})
        probe = GradientProbe(problem, m, data, c)
        for eps in sorted(float(e) for e in eps_list):
            try:
                k = kappa(problem, m, g_prime, eps, data, c, probe)
            except (ArithmeticError, ValueError, RuntimeError):
                k = math.nan
            rows.append(KappaRow(eps, n_t, k))
    return rows


def plateau(rows: Sequence[KappaRow], n_t: int, tol: float = 1e-2):
    """Longest run of consecutive eps (for one N_T) with |kappa - 1| <= tol.

    Returns ``(eps_lo, eps_hi, decades, sup)`` where ``sup`` is the largest
    |kappa - 1| on the run; ``None`` when no eps qualifies.
    """
    sel = sorted((r for r in rows if r.n_t == n_t), key=lambda r: r.epsilon)
    best = None
    run: list[KappaRow] = []
    for r in sel + [None]:
        ok = r is not None and math.isfinite(r.kappa) and abs(r.kappa - 1.0) <= tol
        if ok:
            run.append(r)
            continue
        if run:
            width = math.log10(run[-1].epsilon / run[0].epsilon)
            if best is None or width > best[2]:
                sup = max(abs(x.kappa - 1.0) for x in run)
                best = (run[0].epsilon, run[-1].epsilon, width, sup)
        run = []
    return best


def fd_node_gradient(problem: str, m: DescriptorModel, node_index: int, eps: float,
                     meas: Measurements, cfg: IdentificationConfig | None = None,
                     scheme: str = "central", probe: GradientProbe | None = None) -> float:
    """Finite-difference dJ/dg_k for the hat function of node ``node_index``.

    ``scheme`` is ``"central"`` (default), ``"forward"`` or ``"backward"``.
    """
    probe = probe or GradientProbe(problem, m, meas, cfg)
    g = getattr(m, _which(problem))
    if not 0 <= node_index < g.n_nodes:
        raise IndexError(f"node {node_index} outside 0..{g.n_nodes - 1}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    hat = g.hat(node_index)
    if scheme == "central":
        jp = probe.cost(_perturbed(m, problem, hat, eps))
        jm = probe.cost(_perturbed(m, problem, hat, -eps))
        return (jp - jm) / (2 * eps)
    if scheme == "forward":
        return probe.fd(hat, eps)
    if scheme == "backward":
        return probe.fd(hat, -eps)
    raise ValueError(f"unknown scheme {scheme!r}")


def duality_gap(m: DescriptorModel, traj: Trajectory, which: str, g_prime: GridFunction,
                meas: Measurements, problem: str, rel_tol: float = 1e-10,
                abs_tol: float = 1e-10, n_sub: int = 4, n_gauss: int = 4) -> float:
    """Relative mismatch of int s^T xi' dt and int xi*^T B xi g'(r) dt.

    The tangent and adjoint are integrated independently with the given
    tolerances; both integrals use Gauss quadrature on the merged step grids
    and the measurement times.
    """
    p = problem.upper()
    if _which(p) != which.lower():
        raise ValueError(f"problem {p} perturbs {_which(p)}, not {which}")
    tangent = solve_tangent(m, traj, which, g_prime, rel_tol, abs_tol, stops=meas.times)
    adj = solve_adjoint(m, traj, meas, p, rel_tol, abs_tol)
    t, w = time_quadrature(traj, tangent, adj.trajectory, extra_breaks=meas.times,
                           n_sub=n_sub, n_gauss=n_gauss)
    source = adjoint_source(m, traj, meas, p)
    s = np.array([source(ti) for ti in t])
    xp = tangent.sample(t)
    lhs = float(np.dot(w, np.einsum("ti,ti->t", s, xp)))

    xi = traj.sample(t)
    lam = adj.trajectory.sample(t)
    if p == "P1":
        c = lam[:, 0] * xi[:, 0] + lam[:, 1] * xi[:, 1]
    else:
        c = -lam[:, 0] * xi[:, 1] + lam[:, 1] * xi[:, 0]
    rhs = float(np.dot(w, c * g_prime.eval(np.hypot(xi[:, 0], xi[:, 1]))))
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-30)
