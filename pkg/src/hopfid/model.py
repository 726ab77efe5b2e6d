"""Phase-invariant descriptor system and its synthetic measurements.

The state is the oscillation amplitude pair xi = (a1, a2) with r = |xi|:

    d/dt xi = (g1(r) I + g2(r) J) xi,     a3 = g3(r),

where J = [[0, -1], [1, 0]] generates rotations.  In polar form this reads
dr/dt = g1(r) r and dtheta/dt = g2(r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gridfn import BoundaryTag, GridFunction
from .ode import Trajectory, integrate_forward

__all__ = [
    "ROTATION",
    "DescriptorModel",
    "Simulation",
    "Measurements",
    "Contamination",
    "simulate",
    "landau_ground_truth",
    "mean_field_ground_truth",
    "mean_field_initial_guess",
    "synthesize_measurements",
    "rescale_amplitudes",
    "default_xi0",
]

ROTATION = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class DescriptorModel:
    g1: GridFunction
    g2: GridFunction
    g3: GridFunction

    def __post_init__(self):
        if not (self.g1.same_grid(self.g2) and self.g1.same_grid(self.g3)):
            raise ValueError("g1, g2, g3 must share one grid")

    @property
    def r_circle(self) -> float:
        """Limit-cycle radius r°, the right end of the identifiability interval."""
        return self.g1.r_max

    def replace(self, **kw) -> "DescriptorModel":
        parts = {"g1": self.g1, "g2": self.g2, "g3": self.g3}
        parts.update(kw)
        return DescriptorModel(**parts)

    def rhs(self, xi) -> np.ndarray:
        a1, a2 = float(xi[0]), float(xi[1])
        r = math.hypot(a1, a2)
        g1 = self.g1._eval_scalar(r)
        g2 = self.g2._eval_scalar(r)
        return np.array([g1 * a1 - g2 * a2, g1 * a2 + g2 * a1])

    def vector_field(self):
        """Return ``f(t, xi)`` suitable for the integrators."""
        ev1 = self.g1._eval_scalar
        ev2 = self.g2._eval_scalar
        hypot = math.hypot
        array = np.array

        def field(t, y):
            a1 = y[0]
            a2 = y[1]
            r = hypot(a1, a2)
            g1 = ev1(r)
            g2 = ev2(r)
            return array([g1 * a1 - g2 * a2, g1 * a2 + g2 * a1])

        return field

    def is_limit_cycle_consistent(self, tol: float = 1e-12) -> bool:
        return abs(self.g1.values[-1]) <= tol * max(1.0, self.g1.max_abs())


@dataclass(frozen=True)
class Simulation:
    """Forward solve plus outputs sampled on an equispaced time grid."""

    trajectory: Trajectory
    times: np.ndarray
    states: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    a3: np.ndarray


def default_xi0(r_circle: float) -> np.ndarray:
    return np.array([0.01 * r_circle, 0.0])


def _unwrapped_phase(traj: Trajectory, times: np.ndarray, states: np.ndarray) -> np.ndarray:
    step_phase = np.unwrap(np.arctan2(traj.states[:, 1], traj.states[:, 0]))
    base = np.interp(times, traj.times, step_phase)
    raw = np.arctan2(states[:, 1], states[:, 0])
    return raw + 2 * np.pi * np.round((base - raw) / (2 * np.pi))


def simulate(m: DescriptorModel, xi0, T: float, n_out: int,
             rel_tol: float = 1e-8, abs_tol: float = 1e-8) -> Simulation:
    """Integrate the model from ``xi0`` over [0, T]; sample ``n_out`` equispaced outputs.

    The integrator steps onto every output time, so the samples are step
    endpoints rather than interpolated values.  The phase is unwrapped and
    starts at ``atan2(xi0[1], xi0[0])``.
    """
    xi0 = np.asarray(xi0, dtype=float)
    r0 = math.hypot(*xi0)
    if not r0 > 0:
        raise ValueError("initial state must be away from the origin")
    if T <= 0 or n_out < 2:
        raise ValueError("need T > 0 and n_out >= 2")
    times = np.linspace(0.0, T, n_out)
    # keep phase increments per step well below pi so unwrapping is safe
    omega_max = max(m.g2.max_abs(), 1e-12)
    traj = integrate_forward(m.vector_field(), xi0, (0.0, T), rel_tol, abs_tol,
                             stops=times, max_step=1.0 / omega_max)
    states = traj.sample(times)
    r = np.hypot(states[:, 0], states[:, 1])
    theta = _unwrapped_phase(traj, times, states)
    a3 = m.g3.eval(r)
    return Simulation(traj, times, states, r, theta, a3)


@dataclass(frozen=True)
class Measurements:
    """Sampled r~(t), theta~(t) and a~_Delta(t) on equispaced times over [0, T]."""

    times: np.ndarray
    r_tilde: np.ndarray
    theta_tilde: np.ndarray
    a_delta_tilde: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if n < 2:
            raise ValueError("need at least two samples")
        for name in ("r_tilde", "theta_tilde", "a_delta_tilde"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have the same length as times")
            object.__setattr__(self, name, arr)
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", times)
        if times[0] != 0.0:
            raise ValueError("measurement times must start at 0")
        dt = np.diff(times)
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
            raise ValueError("measurement times must be equispaced")
        if np.any(self.r_tilde < 0):
            raise ValueError("r_tilde must be nonnegative")
        object.__setattr__(self, "_rl", self.r_tilde.tolist())
        object.__setattr__(self, "_thl", self.theta_tilde.tolist())

    @property
    def n_t(self) -> int:
        return len(self.times)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return self.T / (self.n_t - 1)

    def _locate(self, t: float):
        x = t / self.T * (self.n_t - 1)
        k = int(x)
        if k >= self.n_t - 1:
            k = self.n_t - 2
        elif k < 0:
            k = 0
        return k, x - k

    def r_at(self, t: float) -> float:
        k, s = self._locate(t)
        rl = self._rl
        return rl[k] + s * (rl[k + 1] - rl[k])

    def theta_at(self, t: float) -> float:
        k, s = self._locate(t)
        th = self._thl
        return th[k] + s * (th[k + 1] - th[k])

    def resample(self, n_t: int) -> "Measurements":
        """Linear interpolation onto ``n_t`` equispaced times."""
        t = np.linspace(0.0, self.T, n_t)
        return Measurements(t, np.interp(t, self.times, self.r_tilde),
                            np.interp(t, self.times, self.theta_tilde),
                            np.interp(t, self.times, self.a_delta_tilde))

    def to_csv(self, path):
        from .csvio import write_columns
        write_columns(path, {"t": self.times, "r_tilde": self.r_tilde,
                             "theta_tilde": self.theta_tilde,
                             "a_delta_tilde": self.a_delta_tilde}, "measurements")

    @classmethod
    def from_csv(cls, path) -> "Measurements":
        from .csvio import read_columns
        c = read_columns(path)
        missing = {"t", "r_tilde", "theta_tilde", "a_delta_tilde"} - set(c)
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return cls(c["t"], c["r_tilde"], c["theta_tilde"], c["a_delta_tilde"])


@dataclass(frozen=True)
class Contamination:
    """Synthetic departures from phase invariance plus measurement noise.

    ``second_harmonic_amplitude`` multiplies r~ and a~_Delta by
    ``1 + eps2*cos(2 theta)``; ``noise_std`` adds i.i.d. Gaussian noise to
    all three signals.
    """

    second_harmonic_amplitude: float = 0.0
    noise_std: float = 0.0
    seed: int = 0

    @property
    def active(self) -> bool:
        return self.second_harmonic_amplitude != 0.0 or self.noise_std != 0.0


def synthesize_measurements(m: DescriptorModel, xi0, T: float, n_t: int = 500,
                            contamination: Contamination | None = None,
                            rel_tol: float = 1e-10, abs_tol: float = 1e-10) -> Measurements:
    sim = simulate(m, xi0, T, n_t, rel_tol, abs_tol)
    r = sim.r.copy()
    theta = sim.theta.copy()
    a3 = sim.a3.copy()
    if contamination is not None and contamination.active:
        wiggle = 1.0 + contamination.second_harmonic_amplitude * np.cos(2 * theta)
        r = r * wiggle
        a3 = a3 * wiggle
        if contamination.noise_std > 0:
            rng = np.random.default_rng(contamination.seed)
            noise = rng.normal(0.0, contamination.noise_std, size=(3, n_t))
            r = np.abs(r + noise[0])
            theta = theta + noise[1]
            a3 = a3 + noise[2]
    return Measurements(sim.times, r, theta, a3)


def _check_positive(**kw):
    for name, v in kw.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def landau_ground_truth(sigma1: float, beta: float, omega1: float, gamma: float,
                        n_nodes: int = 75, alpha_delta: float = 1.0) -> DescriptorModel:
    """Landau model: g1 = sigma1 - beta r^2, g2 = omega1 + gamma r^2, g3 = alpha_delta r^2."""
    _check_positive(sigma1=sigma1, beta=beta, omega1=omega1)
    r_circle = math.sqrt(sigma1 / beta)
    g1 = GridFunction.from_function(lambda r: sigma1 - beta * r**2, r_circle, n_nodes,
                                    BoundaryTag(left_slope=0.0, right_value=0.0))
    v = g1.values.copy()
    v[-1] = 0.0
    g1 = g1.with_values(v)
    g2 = GridFunction.from_function(lambda r: omega1 + gamma * r**2, r_circle, n_nodes,
                                    BoundaryTag(left_slope=0.0,
                                                right_slope=2 * gamma * r_circle))
    g3 = GridFunction.from_function(lambda r: alpha_delta * r**2, r_circle, n_nodes)
    return DescriptorModel(g1, g2, g3)


def mean_field_ground_truth(sigma1: float, omega1: float, alpha_delta: float,
                            beta_delta: float, gamma_delta: float,
                            n_nodes: int = 75) -> DescriptorModel:
    """Mean-field model with the shift-mode amplitude a_Delta = alpha_delta r^2 substituted."""
    _check_positive(sigma1=sigma1, omega1=omega1, alpha_delta=alpha_delta,
                    beta_delta=beta_delta)
    return landau_ground_truth(sigma1, alpha_delta * beta_delta, omega1,
                               alpha_delta * gamma_delta, n_nodes, alpha_delta)


def mean_field_initial_guess(r_circle: float, n_nodes: int = 75, sigma1: float = 0.151,
                             omega1: float = 0.886, gamma_rel: float = 0.15,
                             G: float | None = None) -> tuple[GridFunction, GridFunction]:
    """Quadratic initial guesses g1 = s(1 - (r/r°)^2), g2 = omega1 + gamma_rel (r/r°)^2.

    The g2 guess is tagged with end slope ``G`` (its analytic slope when not given).
    """
    g1 = GridFunction.from_function(lambda r: sigma1 * (1 - (r / r_circle) ** 2),
                                    r_circle, n_nodes)
    v = g1.values.copy()
    v[-1] = 0.0
    g1 = GridFunction(r_circle, v, BoundaryTag(left_slope=0.0, right_value=0.0))
    slope = 2 * gamma_rel / r_circle if G is None else G
    g2 = GridFunction.from_function(lambda r: omega1 + gamma_rel * (r / r_circle) ** 2,
                                    r_circle, n_nodes,
                                    BoundaryTag(left_slope=0.0, right_slope=slope))
    return g1, g2


def rescale_amplitudes(a1, a2, lam1: float, lam2: float):
    """Equalize the variances of two mode amplitudes while keeping their sum."""
    _check_positive(lam1=lam1, lam2=lam2)
    total = lam1 + lam2
    return (math.sqrt(total / (2 * lam1)) * np.asarray(a1, dtype=float),
            math.sqrt(total / (2 * lam2)) * np.asarray(a2, dtype=float))
