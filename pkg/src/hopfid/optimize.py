"""Cost functionals, line search and Polak-Ribiere descent for g1 and g2."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .adjoint import assemble_l2_gradient, solve_adjoint
from .gridfn import BoundaryTag, GridFunction, h1_inner
from .model import DescriptorModel, Measurements, simulate
from .ode import IntegrationError, Trajectory
from .sobolev import sobolev_gradient

__all__ = [
    "IdentificationConfig",
    "IterationRecord",
    "IdentificationResult",
    "LineSearchResult",
    "trapezoid_weights",
    "j1_from_samples",
    "j2_from_samples",
    "evaluate_j1",
    "evaluate_j2",
    "evaluate_j3",
    "cost",
    "brent_line_search",
    "cg_identify",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class IdentificationConfig:
    T: float = 70.0
    n_t: int = 500
    n_nodes: int = 75
    ell_grad: float = 1.0
    ell_g3: float = 0.1
    G: float = 0.224
    cg_restart: int = 20
    conv_tol: float = 1e-7
    max_iters: int = 200
    min_iters: int = 3
    rel_tol: float = 1e-8
    abs_tol: float = 1e-8
    first_step_fraction: float = 0.1
    line_search_tol: float = 1e-3
    max_bracket_expansions: int = 8
    xi0: tuple[float, float] | None = None

    def __post_init__(self):
        if self.n_t < 2 or self.n_nodes < 3:
            raise ValueError("need n_t >= 2 and n_nodes >= 3")
        for name in ("T", "ell_grad", "ell_g3", "conv_tol", "rel_tol", "abs_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.cg_restart < 1 or self.max_iters < 0:
            raise ValueError("cg_restart must be >= 1 and max_iters >= 0")

    def initial_state(self, r_circle: float) -> np.ndarray:
        if self.xi0 is None:
            return np.array([0.01 * r_circle, 0.0])
        return np.asarray(self.xi0, dtype=float)


def trapezoid_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def j1_from_samples(r: np.ndarray, meas: Measurements) -> float:
    d = r - meas.r_tilde
    return 0.5 * float(np.dot(trapezoid_weights(meas.n_t, meas.dt), d * d))


def j2_from_samples(theta: np.ndarray, meas: Measurements) -> float:
    # 1/2 |e^{i theta} - e^{i theta~}|^2 = 1 - cos(theta - theta~)
    return float(np.dot(trapezoid_weights(meas.n_t, meas.dt),
                        1.0 - np.cos(theta - meas.theta_tilde)))


def _simulate_on(m: DescriptorModel, meas: Measurements, xi0, rel_tol, abs_tol):
    return simulate(m, xi0, meas.T, meas.n_t, rel_tol, abs_tol)


def evaluate_j1(m: DescriptorModel, meas: Measurements, xi0,
                rel_tol: float = 1e-8, abs_tol: float = 1e-8) -> float:
    return j1_from_samples(_simulate_on(m, meas, xi0, rel_tol, abs_tol).r, meas)


def evaluate_j2(m: DescriptorModel, meas: Measurements, xi0,
                rel_tol: float = 1e-8, abs_tol: float = 1e-8) -> float:
    return j2_from_samples(_simulate_on(m, meas, xi0, rel_tol, abs_tol).theta, meas)


def evaluate_j3(g3: GridFunction, traj, meas: Measurements) -> float:
    """Trapezoidal 1/2 int (g3(r(t)) - a~_Delta(t))^2 dt.

    ``traj`` is a trajectory or the amplitudes r at the measurement times.
    """
    if isinstance(traj, Trajectory):
        xi = traj.sample(meas.times)
        r = np.hypot(xi[:, 0], xi[:, 1])
    else:
        r = np.asarray(traj, dtype=float)
    d = g3.eval(r) - meas.a_delta_tilde
    return 0.5 * float(np.dot(trapezoid_weights(meas.n_t, meas.dt), d * d))


def cost(problem: str, m: DescriptorModel, meas: Measurements, xi0,
         rel_tol: float = 1e-8, abs_tol: float = 1e-8) -> float:
    if problem.upper() == "P1":
        return evaluate_j1(m, meas, xi0, rel_tol, abs_tol)
    if problem.upper() == "P2":
        return evaluate_j2(m, meas, xi0, rel_tol, abs_tol)
    raise ValueError(f"unknown problem {problem!r}")


# line search ----------------------------------------------------------------

@dataclass(frozen=True)
class LineSearchResult:
    tau: float
    value: float
    progressed: bool
    n_evals: int
    tau_max: float


_PENALTY = 1e100
# a stalled search counts as converged below this fraction of the cost scale
STALL_COST_FRACTION = 1e-6


def brent_line_search(phi: Callable[[float], float], tau_max: float, tol: float = 1e-3,
                      phi0: float | None = None,
                      max_expansions: int = 8) -> LineSearchResult:
    """Minimize ``phi`` over [0, tau_max] with bounded Brent iterations.

    If the minimizer sits at the upper end the bracket is enlarged by the
    golden factor (1 + golden ratio) and the search repeated.  Failed
    evaluations (exceptions or non-finite values) count as +inf; a failed
    upper end halves the bracket before the search starts.  When no
    point improves on ``phi(0)`` the result has ``tau = 0`` and
    ``progressed = False``.
    """
    if not tau_max > 0:
        raise ValueError("tau_max must be positive")
    n_evals = 0
    cache: dict[float, float] = {}

    def f(tau):
        nonlocal n_evals
        if tau in cache:
            return cache[tau]
        n_evals += 1
        try:
            v = float(phi(tau))
        except (IntegrationError, FloatingPointError, ValueError) as exc:
            log.debug("line search trial tau=%g failed: %s", tau, exc)
            v = math.inf
        cache[tau] = v
        return v

    if phi0 is None:
        phi0 = f(0.0)
    else:
        cache[0.0] = phi0
    grow = 1.0 + (1.0 + math.sqrt(5.0)) / 2.0
    upper = tau_max
    # Brent cannot see past a flat penalty, so pull the bracket back into
    # the region where the forward model is solvable
    for _ in range(40):
        if math.isfinite(f(upper)):
            break
        upper *= 0.5
    best_tau, best_val = 0.0, phi0
    for _ in range(max_expansions + 1):
        res = minimize_scalar(lambda x: min(f(x), _PENALTY), bounds=(0.0, upper),
                              method="bounded", options={"xatol": tol * upper})
        tau = float(res.x)
        val = f(tau)
        if val < best_val:
            best_tau, best_val = tau, val
        at_edge = tau > upper * (1.0 - 4 * tol)
        if not (at_edge and val <= best_val and math.isfinite(val)):
            break
        upper *= grow
    if best_val < phi0:
        return LineSearchResult(best_tau, best_val, True, n_evals, upper)
    return LineSearchResult(0.0, phi0, False, n_evals, upper)


# conjugate gradients ---------------------------------------------------------

@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    cost: float
    step: float
    grad_norm: float
    restart: str


@dataclass
class IdentificationResult:
    g: GridFunction
    history: list[IterationRecord]
    status: str
    model: DescriptorModel
    iterates: list[GridFunction] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def costs(self) -> np.ndarray:
        return np.array([rec.cost for rec in self.history])

    def history_columns(self) -> dict:
        return {
            "iter": [rec.iteration for rec in self.history],
            "cost": [rec.cost for rec in self.history],
            "step": [rec.step for rec in self.history],
            "grad_norm": [rec.grad_norm for rec in self.history],
            "restart": [rec.restart for rec in self.history],
        }


def _prepare(problem: str, g_init: GridFunction, partner: GridFunction | None,
             cfg: IdentificationConfig):
    r_circle = g_init.r_max
    if problem == "P1":
        tol = 1e-12 * max(1.0, g_init.max_abs())
        if abs(g_init.values[-1]) > tol:
            raise ValueError("P1 initial guess must vanish at r°")
        g = g_init.with_bc(BoundaryTag(left_slope=0.0, right_value=0.0))
        base = DescriptorModel(g, GridFunction.constant(0.0, r_circle, g.n_nodes),
                               GridFunction.constant(0.0, r_circle, g.n_nodes))
        return g, base, lambda gg: base.replace(g1=gg)
    if partner is None:
        raise ValueError("P2 needs the reconstructed g1 as fixed partner")
    G = g_init.bc.right_slope if g_init.bc.right_slope is not None else cfg.G
    g = g_init.with_bc(BoundaryTag(left_slope=0.0, right_slope=G))
    base = DescriptorModel(partner, g, GridFunction.constant(0.0, r_circle, g.n_nodes))
    return g, base, lambda gg: base.replace(g2=gg)


class _Evaluator:
    """Forward solves and gradients for one problem, caching the last simulation."""

    def __init__(self, problem, build, meas, xi0, cfg):
        self.problem = problem
        self.build = build
        self.meas = meas
        self.xi0 = xi0
        self.cfg = cfg

    def simulate(self, g):
        return simulate(self.build(g), self.xi0, self.meas.T, self.meas.n_t,
                        self.cfg.rel_tol, self.cfg.abs_tol)

    def cost_of(self, sim):
        if self.problem == "P1":
            return j1_from_samples(sim.r, self.meas)
        return j2_from_samples(sim.theta, self.meas)

    def cost(self, g):
        return self.cost_of(self.simulate(g))

    def cost_scale(self) -> float:
        """Cost of a model that misses the data entirely (r = 0, or a quarter-turn phase error)."""
        w = trapezoid_weights(self.meas.n_t, self.meas.dt)
        if self.problem == "P1":
            return 0.5 * float(np.dot(w, self.meas.r_tilde ** 2))
        return float(w.sum())

    def gradients(self, g, sim):
        m = self.build(g)
        adj = solve_adjoint(m, sim.trajectory, self.meas, self.problem,
                            self.cfg.rel_tol, self.cfg.abs_tol)
        l2 = assemble_l2_gradient(m, sim.trajectory, adj, self.problem, g)
        h1 = sobolev_gradient(l2, self.cfg.ell_grad, self.problem)
        return l2, h1


def cg_identify(problem: str, g_init: GridFunction, fixed_partner: GridFunction | None,
                meas: Measurements, cfg: IdentificationConfig | None = None,
                keep_iterates: bool = False,
                callback: Callable[[IterationRecord, GridFunction], None] | None = None
                ) -> IdentificationResult:
    """Polak-Ribiere conjugate gradients with Sobolev gradients.

    For P1 the phase function g2 is set to zero (the amplitude equation does
    not involve it); for P2 ``fixed_partner`` is the reconstructed g1.  The
    momentum is dropped every ``cfg.cg_restart`` iterations and whenever the
    conjugate direction is not a descent direction.  Iterations stop when
    the relative change of the cost is at most ``cfg.conv_tol`` (after
    ``cfg.min_iters`` iterations).  A stalled line search counts as
    converged only if the gradient has dropped by three orders of magnitude
    or the cost is below ``STALL_COST_FRACTION`` of the cost of a model
    that misses the data entirely; otherwise the status is ``"stalled"``.
    """
    cfg = cfg or IdentificationConfig()
    problem = problem.upper()
    g, base, build = _prepare(problem, g_init, fixed_partner, cfg)
    xi0 = cfg.initial_state(g.r_max)
    ev = _Evaluator(problem, build, meas, xi0, cfg)

    try:
        sim = ev.simulate(g)
    except IntegrationError:
        return IdentificationResult(g, [], "failed", build(g))
    J = ev.cost_of(sim)
    history: list[IterationRecord] = []
    iterates = [g] if keep_iterates else []

    ell = cfg.ell_grad
    d_prev = grad_prev = None
    gnorm_prev = None
    gnorm0 = None
    tau_prev = None
    status = "max_iters"

    for n in range(cfg.max_iters + 1):
        try:
            l2, grad = ev.gradients(g, sim)
        except (IntegrationError, ValueError) as exc:
            log.warning("gradient evaluation failed: %s", exc)
            status = "failed"
            break
        gnorm2 = h1_inner(grad, grad, ell)
        gnorm = math.sqrt(max(gnorm2, 0.0))
        if gnorm0 is None:
            gnorm0 = gnorm

        restart = ""
        if d_prev is None:
            restart = "init"
            d = grad
        elif n % cfg.cg_restart == 0:
            restart = "scheduled"
            d = grad
        else:
            beta = h1_inner(grad, grad.axpy(-1.0, grad_prev), ell) / gnorm_prev ** 2
            d = grad.axpy(beta, d_prev)
            if l2.l2_inner(d) <= 0.0:
                restart = "nondescent"
                d = grad

        rec_index = len(history)
        if n == cfg.max_iters or gnorm == 0.0:
            history.append(IterationRecord(rec_index, J, 0.0, gnorm, restart))
            if gnorm == 0.0:
                status = "converged"
            break

        def phi(tau, d=d):
            return ev.cost(g.axpy(-tau, d))

        if tau_prev is None:
            tau_max = cfg.first_step_fraction * max(g.max_abs(), 1e-12) / d.max_abs()
        else:
            tau_max = 2.0 * tau_prev
        ls = brent_line_search(phi, tau_max, cfg.line_search_tol, phi0=J,
                               max_expansions=cfg.max_bracket_expansions)
        if not ls.progressed and restart == "":
            # conjugate direction gave nothing: retry along the gradient
            restart = "nondescent"
            d = grad
            tau_max = cfg.first_step_fraction * max(g.max_abs(), 1e-12) / d.max_abs()
            ls = brent_line_search(lambda tau: ev.cost(g.axpy(-tau, grad)), tau_max,
                                   cfg.line_search_tol, phi0=J,
                                   max_expansions=cfg.max_bracket_expansions)

        history.append(IterationRecord(rec_index, J, ls.tau, gnorm, restart))
        if callback is not None:
            callback(history[-1], g)

        if not ls.progressed:
            if gnorm <= 1e-3 * gnorm0 or J <= STALL_COST_FRACTION * ev.cost_scale():
                status = "converged"
            else:
                status = "stalled"
            history.append(IterationRecord(rec_index + 1, J, 0.0, gnorm, ""))
            break

        g_new = g.axpy(-ls.tau, d)
        try:
            sim_new = ev.simulate(g_new)
        except IntegrationError:
            status = "failed"
            break
        J_new = ev.cost_of(sim_new)
        rel_change = abs(J_new - J) / J if J > 0 else 0.0
        tau_prev = ls.tau
        d_prev, grad_prev, gnorm_prev = d, grad, gnorm
        g, sim, J = g_new, sim_new, J_new
        if keep_iterates:
            iterates.append(g)
        if rel_change <= cfg.conv_tol and n + 1 >= cfg.min_iters:
            history.append(IterationRecord(rec_index + 1, J, 0.0, math.nan, ""))
            status = "converged"
            break
    else:
        status = "max_iters"

    if history and math.isnan(history[-1].grad_norm):
        # final record: fill in the gradient norm at the last iterate
        try:
            _, grad = ev.gradients(g, sim)
            history[-1] = replace(history[-1], grad_norm=math.sqrt(h1_inner(grad, grad, ell)))
        except (IntegrationError, ValueError):
            pass
    return IdentificationResult(g, history, status, build(g), iterates)
