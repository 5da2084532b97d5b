"""Hybrid integration of the switched flow and its variational system,
projected seminorm traces, and exponential rate fits.

Fixed-step RK4 with switch-aligned substeps: deterministic, reproducible, and
the convergence order is trivially testable. The last step of every
constant-mode segment is shortened to land exactly on the switch time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signals import SwitchingSignal
from .subspaces import Projector
from .system import SwitchedSystem, compiled_field, compiled_jacobian


class DivergenceError(RuntimeError):
    """State became non-finite; carries the first bad time."""

    def __init__(self, time: float):
        super().__init__(f"state diverged (non-finite) at t = {time:.6g}")
        self.time = time


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray   # (m,), strictly increasing, includes every switch time once
    states: np.ndarray  # (m, n)
    signal: SwitchingSignal

    def state_at_index_of(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.times, t))
        if k >= len(self.times) or abs(self.times[k] - t) > 1e-9:
            raise KeyError(f"time {t} is not a sample time")
        return self.states[k]


@dataclass(frozen=True, eq=False)
class VariationalTrace:
    times: np.ndarray
    states: np.ndarray  # (m, n) perturbation states


def _segments(sig: SwitchingSignal, t_end: float):
    out = []
    for k, (tk, mode) in enumerate(sig.events):
        seg_end = sig.events[k + 1][0] if k + 1 < len(sig.events) else sig.horizon
        seg_end = min(seg_end, t_end)
        if seg_end > tk + 1e-15:
            out.append((tk, seg_end, mode))
        if seg_end >= t_end:
            break
    return out


def _segment_steps(t0: float, t1: float, step: float):
    # fixed steps of `step`, final one shortened to land exactly on t1
    span = t1 - t0
    n_full = int(math.floor(span / step + 1e-9))
    times = [t0 + k * step for k in range(n_full + 1)]
    if t1 - times[-1] > 1e-12:
        times.append(t1)
    else:
        times[-1] = t1
    return times


def _rk4_step(f, t, x, h):
    k1 = f(t, x)
    k2 = f(t + h / 2.0, x + h / 2.0 * k1)
    k3 = f(t + h / 2.0, x + h / 2.0 * k2)
    k4 = f(t + h, x + h * k3)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(system: SwitchedSystem, sig: SwitchingSignal, x0, step: float,
              t_end: float | None = None) -> Trajectory:
    """Integrate the switched flow; state is continuous across switches."""
    if step <= 0:
        raise ValueError("step must be positive")
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")
    t_end = sig.horizon if t_end is None else t_end
    if t_end > sig.horizon + 1e-12:
        raise ValueError("signal does not cover the requested span")
    times = [sig.start_time]
    states = [x0]
    x = x0
    for seg_start, seg_end, mode_id in _segments(sig, t_end):
        field = compiled_field(system.mode(mode_id))

        def f(_t, state, field=field):
            return field(state)

        seg_times = _segment_steps(seg_start, seg_end, step)
        for t_prev, t_next in zip(seg_times, seg_times[1:]):
            x = _rk4_step(f, t_prev, x, t_next - t_prev)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(t_next)
            times.append(t_next)
            states.append(x)
    return Trajectory(np.array(times), np.array(states), sig)


def integrate_variational(system: SwitchedSystem, sig: SwitchingSignal,
                          x_traj: Trajectory, y0) -> VariationalTrace:
    """Co-integrate the perturbation dynamics y' = A(x(t)) y along a stored
    trajectory, interpolating x linearly inside each step."""
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial perturbation must be finite")
    times = x_traj.times
    states = x_traj.states
    y = y0
    out = [y0]
    mode_of = {t: m for t, m in sig.events}
    current = sig.events[0][1]
    for k in range(len(times) - 1):
        t0, t1 = float(times[k]), float(times[k + 1])
        if t0 in mode_of:
            current = mode_of[t0]
        jac = compiled_jacobian(system.mode(current))
        x_a, x_b = states[k], states[k + 1]
        h = t1 - t0

        def f(t, yy, jac=jac, t0=t0, h=h, x_a=x_a, x_b=x_b):
            w = 0.0 if h == 0 else (t - t0) / h
            x_t = (1.0 - w) * x_a + w * x_b
            return jac(x_t) @ yy

        y = _rk4_step(f, t0, y, h)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(t1)
        out.append(y)
    return VariationalTrace(times.copy(), np.array(out))


def projected_trace(trace: VariationalTrace, proj: Projector) -> np.ndarray:
    """Pointwise seminorm ||Pi y(t)|| of a variational trace."""
    return np.linalg.norm(trace.states @ proj.matrix.T, axis=1)


def distance_trace(a: Trajectory, b: Trajectory) -> np.ndarray:
    """Pointwise distance between two trajectories on the same time grid."""
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, atol=1e-9):
        raise ValueError("trajectories are on different time grids")
    return np.linalg.norm(a.states - b.states, axis=1)


@dataclass(frozen=True)
class RateFit:
    rate: float        # decay rate (positive = decaying), 1/s
    prefactor: float   # value of the fitted exponential at the window start
    rmse: float        # residual of the log-linear fit
    window: tuple
    floored_points: int  # samples clamped at the positivity floor


def fit_rate(times, values, window: tuple) -> RateFit:
    """Least-squares exponential fit on a window: slope of ln(values) vs time."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    t_a, t_b = window
    mask = (times >= t_a - 1e-12) & (times <= t_b + 1e-12)
    t = times[mask]
    v = values[mask]
    if t.size < 3:
        raise ValueError(f"need at least 3 samples in the window, got {t.size}")
    floored = int(np.sum(v < 1e-300))
    logs = np.log(np.maximum(v, 1e-300))
    design = np.stack([t - t[0], np.ones_like(t)], axis=1)
    coef, *_ = np.linalg.lstsq(design, logs, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    residual = design @ coef - logs
    rmse = float(np.sqrt(np.mean(residual**2)))
    return RateFit(-slope, math.exp(intercept), rmse, (float(t_a), float(t_b)), floored)


def step_halving_agreement(system: SwitchedSystem, sig: SwitchingSignal, x0,
                           step: float, t_end: float | None = None) -> float:
    """Worst state difference at segment boundaries between runs at `step` and
    `step/2` - the validation oracle behind every reported simulation."""
    coarse = integrate(system, sig, x0, step, t_end)
    fine = integrate(system, sig, x0, step / 2.0, t_end)
    checkpoints = [sig.start_time, *sig.switch_times, float(coarse.times[-1])]
    worst = 0.0
    for t in checkpoints:
        if t > coarse.times[-1] + 1e-12:
            break
        xa = coarse.state_at_index_of(t)
        xb = fine.state_at_index_of(t)
        worst = max(worst, float(np.max(np.abs(xa - xb))))
    return worst
