"""Adaptive Dormand-Prince 5(4) integration with cubic Hermite dense output.

Used for the forward descriptor system, its tangent linearization and the
backward-in-time adjoint solves.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "IntegrationError",
    "Trajectory",
    "integrate_forward",
    "integrate_backward",
    "sample_at",
]

Rhs = Callable[[float, np.ndarray], np.ndarray]

# Dormand-Prince tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = (9017 / 3168, -355 / 33, 46732 / 5247,
                                49 / 176, -5103 / 18656)
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# difference between 5th and embedded 4th order weights
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                                -17253 / 339200, 22 / 525, -1 / 40)

_C = np.array([0.0, _C2, _C3, _C4, _C5, 1.0, 1.0])
_A = np.zeros((7, 6))
_A[1, :1] = [_A21]
_A[2, :2] = [_A31, _A32]
_A[3, :3] = [_A41, _A42, _A43]
_A[4, :4] = [_A51, _A52, _A53, _A54]
_A[5, :5] = [_A61, _A62, _A63, _A64, _A65]
_B = np.array([_B1, 0.0, _B3, _B4, _B5, _B6])
_E = np.array([_E1, 0.0, _E3, _E4, _E5, _E6, _E7])
_C = _C.tolist()

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


class IntegrationError(RuntimeError):
    """Raised when the step size underflows or the solution stops being finite."""

    def __init__(self, message: str, t_last: float):
        super().__init__(f"{message} (last valid t = {t_last:.10g})")
        self.t_last = t_last


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered states with derivatives at every step point.

    ``times`` is strictly increasing; ``states[i]`` and ``derivs[i]`` hold
    the solution and the vector field at ``times[i]``.  Between step points
    the solution is reconstructed by cubic Hermite interpolation.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray

    def __post_init__(self):
        if self.times.ndim != 1 or len(self.times) < 2:
            raise ValueError("a trajectory needs at least two time points")
        if self.states.shape != self.derivs.shape or len(self.states) != len(self.times):
            raise ValueError("times, states and derivs must have matching lengths")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        for arr in (self.times, self.states, self.derivs):
            arr.setflags(write=False)
        object.__setattr__(self, "_tlist", self.times.tolist())

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self) -> int:
        return len(self.times)

    def at(self, t: float) -> np.ndarray:
        """Scalar dense-output evaluation (fast path for use inside rhs callbacks)."""
        tl = self._tlist
        if t < tl[0] or t > tl[-1]:
            span = tl[-1] - tl[0]
            if t < tl[0] - 1e-12 * span or t > tl[-1] + 1e-12 * span:
                raise ValueError(f"query time {t} outside [{tl[0]}, {tl[-1]}]")
            t = min(max(t, tl[0]), tl[-1])
        i = bisect_right(tl, t) - 1
        if i >= len(tl) - 1:
            i = len(tl) - 2
        ta, tb = tl[i], tl[i + 1]
        h = tb - ta
        s = (t - ta) / h
        if s == 0.0:
            return self.states[i]
        if s == 1.0:
            return self.states[i + 1]
        s2 = s * s
        s3 = s2 * s
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        ya = self.states[i]
        return (ya + h01 * (self.states[i + 1] - ya) + (h10 * h) * self.derivs[i]
                + (h11 * h) * self.derivs[i + 1])

    def sample(self, query_times) -> np.ndarray:
        return sample_at(self, query_times)


def sample_at(traj: Trajectory, query_times) -> np.ndarray:
    """Evaluate the Hermite dense output at ``query_times`` (vectorized).

    Returns an array of shape ``(len(query_times), dim)``.  Queries at stored
    step times return the stored states exactly.
    """
    tq = np.atleast_1d(np.asarray(query_times, dtype=float))
    times = traj.times
    span = times[-1] - times[0]
    slack = 1e-12 * span
    if np.any(tq < times[0] - slack) or np.any(tq > times[-1] + slack):
        raise ValueError("query time outside the trajectory's time span")
    tq = np.clip(tq, times[0], times[-1])
    idx = np.searchsorted(times, tq, side="right") - 1
    idx = np.clip(idx, 0, len(times) - 2)
    ta = times[idx]
    h = times[idx + 1] - ta
    s = ((tq - ta) / h)[:, None]
    s2 = s * s
    s3 = s2 * s
    h10 = (s3 - 2 * s2 + s) * h[:, None]
    h01 = -2 * s3 + 3 * s2
    h11 = (s3 - s2) * h[:, None]
    ya = traj.states[idx]
    # h00 = 1 - h01; this form reproduces constants exactly
    out = (ya + h01 * (traj.states[idx + 1] - ya) + h10 * traj.derivs[idx]
           + h11 * traj.derivs[idx + 1])
    # exact at step points
    hit_left = s[:, 0] == 0.0
    out[hit_left] = traj.states[idx[hit_left]]
    hit_right = s[:, 0] == 1.0
    out[hit_right] = traj.states[idx[hit_right] + 1]
    return out


def _rms(x: np.ndarray) -> float:
    return math.sqrt(float(np.dot(x, x)) / x.size)


def _initial_step(rhs, t0, y0, f0, direction_span, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    f1 = rhs(t0 + h0, y1)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, direction_span)


def integrate_forward(rhs: Rhs, y0, t_span: Sequence[float],
                      rel_tol: float = 1e-8, abs_tol: float = 1e-8, *,
                      stops=None, max_step: float = np.inf,
                      first_step: float | None = None,
                      max_steps: int = 500_000) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` from ``t_span[0]`` to ``t_span[1]``.

    Parameters
    ----------
    rhs : callable
        Vector field ``rhs(t, y) -> ndarray``.
    y0 : array_like
        Initial state.
    t_span : (t0, t1)
        Integration interval, ``t1 > t0``.
    rel_tol, abs_tol : float
        Local error tolerances for the embedded error estimate.
    stops : array_like, optional
        Times the integrator must step onto exactly.  Useful where the rhs
        has kinks (e.g. linearly interpolated data) or where samples must
        coincide with step endpoints.
    max_step : float
        Upper bound on the step size.

    Raises
    ------
    IntegrationError
        If the step size underflows or the state becomes non-finite.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must satisfy t1 > t0")
    if rel_tol <= 0 or abs_tol <= 0:
        raise ValueError("tolerances must be positive")

    y = np.array(y0, dtype=float)
    f = np.asarray(rhs(t0, y), dtype=float)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(f))):
        raise IntegrationError("non-finite initial state or rhs", t0)

    if stops is None:
        stop_list = [t1]
    else:
        st = np.unique(np.asarray(stops, dtype=float))
        st = st[(st > t0) & (st < t1)]
        stop_list = st.tolist() + [t1]
    k_stop = 0

    span = t1 - t0
    h = first_step if first_step is not None else _initial_step(
        rhs, t0, y, f, span, rel_tol, abs_tol)
    h = min(h, max_step)

    K = np.empty((7, len(y)))
    ts = [t0]
    ys = [y]
    fs = [f]
    t = t0
    n_steps = 0
    eps_t = 16 * np.finfo(float).eps

    while t < t1:
        n_steps += 1
        if n_steps > max_steps:
            raise IntegrationError("maximum number of steps exceeded", t)
        if h <= eps_t * max(abs(t), span):
            raise IntegrationError("step size underflow", t)

        target = stop_list[k_stop]
        h_nominal = h
        clipped = False
        if t + h >= target - eps_t * max(abs(target), 1.0):
            h = target - t
            clipped = True

        K[0] = f
        for i in range(1, 6):
            K[i] = rhs(t + _C[i] * h, y + np.dot(h * _A[i, :i], K[:i]))
        y_new = y + np.dot(h * _B, K[:6])
        t_new = target if clipped else t + h
        K[6] = rhs(t_new, y_new)

        err_vec = np.dot(h * _E, K)
        scale = abs_tol + rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms(err_vec / scale)

        if not np.isfinite(err) or not np.all(np.isfinite(y_new)):
            h *= 0.25
            continue

        if err <= 1.0:
            t = t_new
            y = y_new
            f = K[6].copy()
            ts.append(t)
            ys.append(y)
            fs.append(f)
            if clipped:
                k_stop += 1
            factor = _MAX_FACTOR if err == 0.0 else min(
                _MAX_FACTOR, _SAFETY * err ** -0.2)
            h_next = h * factor
            if clipped:
                h_next = max(h_next, min(h_nominal, h * _MAX_FACTOR))
            h = min(h_next, max_step)
        else:
            h *= max(_MIN_FACTOR, _SAFETY * err ** -0.2)

    return Trajectory(np.array(ts), np.array(ys), np.array(fs))


def integrate_backward(rhs: Rhs, yT, t_span: Sequence[float],
                       rel_tol: float = 1e-8, abs_tol: float = 1e-8, *,
                       stops=None, max_step: float = np.inf,
                       max_steps: int = 500_000) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` backward from ``y(t1) = yT`` to ``t0``.

    ``t_span`` is given as ``(t1, t0)`` with ``t1 > t0``.  The solve runs in
    reversed time ``s = t1 - t`` and the result is re-indexed to increasing
    physical time, with ``derivs`` holding ``rhs`` in physical time.
    """
    t1, t0 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError("t_span must be given as (t1, t0) with t1 > t0")

    def reversed_rhs(s, z):
        return -rhs(t1 - s, z)

    rev_stops = None if stops is None else t1 - np.asarray(stops, dtype=float)
    try:
        rev = integrate_forward(reversed_rhs, yT, (0.0, t1 - t0), rel_tol, abs_tol,
                                stops=rev_stops, max_step=max_step,
                                max_steps=max_steps)
    except IntegrationError as exc:
        raise IntegrationError("backward integration failed", t1 - exc.t_last) from exc
    times = (t1 - rev.times)[::-1].copy()
    times[0], times[-1] = t0, t1
    return Trajectory(times, rev.states[::-1].copy(), -rev.derivs[::-1].copy())
