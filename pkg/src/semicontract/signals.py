"""Switching signals: activation statistics, average dwell/leave-time
verification, per-activation checks, and compliant signal generators."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .certificates import DwellBounds

TIME_EPS = 1e-12


@dataclass(frozen=True)
class Activation:
    mode: int
    start: float
    end: float
    censored: bool  # True when the activation is cut off by the horizon

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class SwitchingSignal:
    """Right-continuous piecewise-constant mode schedule.

    events[k] = (t_k, mode entered at t_k); the first event is at start_time
    and the mode stays constant on [t_k, t_{k+1}).
    """

    start_time: float
    events: tuple  # ((time, mode), ...)
    horizon: float

    def __post_init__(self):
        if not self.events:
            raise ValueError("a signal needs at least the initial mode event")
        if abs(self.events[0][0] - self.start_time) > TIME_EPS:
            raise ValueError("first event must be at the start time")
        if self.horizon <= self.events[-1][0]:
            raise ValueError("horizon must exceed the last switch time")
        previous_t, previous_m = None, None
        for t, mode in self.events:
            if mode < 1 or int(mode) != mode:
                raise ValueError(f"mode ids are positive integers, got {mode}")
            if previous_t is not None:
                if t - previous_t <= TIME_EPS:
                    raise ValueError(f"dwell times must be positive, got switch at {t} after {previous_t}")
                if mode == previous_m:
                    raise ValueError(f"consecutive events enter the same mode {mode}")
            previous_t, previous_m = t, mode

    @property
    def modes(self) -> tuple:
        return tuple(sorted({mode for _, mode in self.events}))

    @property
    def switch_times(self) -> tuple:
        return tuple(t for t, _ in self.events[1:])

    def mode_at(self, t: float) -> int:
        if t < self.start_time - TIME_EPS or t > self.horizon + TIME_EPS:
            raise ValueError(f"time {t} outside [{self.start_time}, {self.horizon}]")
        current = self.events[0][1]
        for tk, mode in self.events:
            if tk <= t + TIME_EPS:
                current = mode
            else:
                break
        return current

    def activations(self) -> tuple:
        out = []
        for k, (tk, mode) in enumerate(self.events):
            end = self.events[k + 1][0] if k + 1 < len(self.events) else self.horizon
            out.append(Activation(mode, tk, end, censored=(k + 1 == len(self.events))))
        return tuple(out)


@dataclass(frozen=True)
class DwellStats:
    mode: int
    window: tuple  # (t_a, t_b)
    count: int     # activations intersecting [t_a, t_b)
    total_time: float  # time the mode is active within [t_a, t_b)


def dwell_stats(sig: SwitchingSignal, mode: int, t_a: float, t_b: float) -> DwellStats:
    """Count activations of a mode intersecting [t_a, t_b) and their total time there."""
    if mode not in sig.modes:
        raise KeyError(f"mode {mode} never appears in the signal")
    if not (sig.start_time - TIME_EPS <= t_a < t_b <= sig.horizon + TIME_EPS):
        raise ValueError(f"window [{t_a}, {t_b}) outside the signal span")
    count = 0
    total = 0.0
    for act in sig.activations():
        if act.mode != mode:
            continue
        overlap = min(act.end, t_b) - max(act.start, t_a)
        if overlap > TIME_EPS:
            count += 1
            total += overlap
    return DwellStats(mode, (t_a, t_b), count, total)


@dataclass(frozen=True)
class WindowCheck:
    ok: bool
    worst_value: float   # most violating value of the checked inequality's slack
    worst_window: tuple  # (t_a, t_b) attaining it
    checked_windows: int


def _grid_times(sig: SwitchingSignal):
    times = [sig.start_time, *sig.switch_times, sig.horizon]
    unique = []
    for t in times:
        if not unique or t - unique[-1] > TIME_EPS:
            unique.append(t)
    return unique


def verify_mdadt(sig: SwitchingSignal, mode: int, tau_lower: float,
                 n_lower: float) -> WindowCheck:
    """Average dwell time: N(t_a,t_b) <= n_lower + T(t_a,t_b)/tau_lower over all
    windows with switching-time endpoints (statistics change only there)."""
    if tau_lower <= 0 or n_lower <= 0:
        raise ValueError("tau_lower and n_lower must be positive")
    return _scan_windows(sig, mode, lambda n, t: n - n_lower - t / tau_lower, sense=+1)


def verify_mdalt(sig: SwitchingSignal, mode: int, tau_upper: float,
                 n_upper: float) -> WindowCheck:
    """Average leave time: N(t_a,t_b) >= n_upper + T(t_a,t_b)/tau_upper over all
    switching-time windows. n_upper may be any real (see tightest_mdalt_offset)."""
    if tau_upper <= 0:
        raise ValueError("tau_upper must be positive")
    return _scan_windows(sig, mode, lambda n, t: n_upper + t / tau_upper - n, sense=+1)


def _scan_windows(sig, mode, violation, sense):
    # violation(n, t) > 0 means the window violates; worst = max violation
    times = _grid_times(sig)
    worst = -math.inf
    worst_window = (times[0], times[-1])
    checked = 0
    for i in range(len(times) - 1):
        for j in range(i + 1, len(times)):
            stats = dwell_stats(sig, mode, times[i], times[j])
            value = sense * violation(stats.count, stats.total_time)
            checked += 1
            if value > worst:
                worst = value
                worst_window = (times[i], times[j])
    return WindowCheck(bool(worst <= 1e-12), worst, worst_window, checked)


def tightest_mdadt_offset(sig: SwitchingSignal, mode: int, tau_lower: float) -> float:
    """Smallest n_lower making verify_mdadt pass for the given tau_lower."""
    times = _grid_times(sig)
    worst = 0.0
    for i in range(len(times) - 1):
        for j in range(i + 1, len(times)):
            stats = dwell_stats(sig, mode, times[i], times[j])
            worst = max(worst, stats.count - stats.total_time / tau_lower)
    return worst


def tightest_mdalt_offset(sig: SwitchingSignal, mode: int, tau_upper: float) -> float:
    """Largest n_upper making verify_mdalt pass for the given tau_upper."""
    times = _grid_times(sig)
    best = math.inf
    for i in range(len(times) - 1):
        for j in range(i + 1, len(times)):
            stats = dwell_stats(sig, mode, times[i], times[j])
            best = min(best, stats.count - stats.total_time / tau_upper)
    return best


@dataclass(frozen=True)
class ActivationCheck:
    ok: bool
    mode: int | None
    activation_index: int | None
    length: float | None
    reason: str


def verify_per_activation(sig: SwitchingSignal, bounds: DwellBounds) -> ActivationCheck:
    """Every activation of a lower-bounded mode must last at least tau_lower and
    every activation of an upper-bounded mode at most tau_upper.

    The final activation is censored by the horizon: its observed length still
    enforces the upper bound but cannot fail the lower one.
    """
    for mode in sig.modes:
        if mode not in bounds.lower and mode not in bounds.upper:
            raise ValueError(f"no dwell bounds for mode {mode}")
    counters = {mode: 0 for mode in sig.modes}
    for act in sig.activations():
        index = counters[act.mode]
        counters[act.mode] += 1
        upper = bounds.upper.get(act.mode)
        if upper is not None and act.length > upper + TIME_EPS:
            return ActivationCheck(False, act.mode, index, act.length,
                                   f"activation lasts {act.length:.6g} > {upper:.6g}")
        lower = bounds.lower.get(act.mode)
        if lower is not None and not act.censored and act.length < lower - TIME_EPS:
            return ActivationCheck(False, act.mode, index, act.length,
                                   f"activation lasts {act.length:.6g} < {lower:.6g}")
    return ActivationCheck(True, None, None, None, "all activations within bounds")


def generate_periodic(mode_order, dwell, t0: float, horizon: float) -> SwitchingSignal:
    """Cyclic schedule over mode_order, truncated at the horizon. dwell is a
    single time or a per-mode mapping."""
    mode_order = list(mode_order)
    if not mode_order:
        raise ValueError("empty mode list")
    if horizon <= t0:
        raise ValueError("horizon must exceed the start time")
    if isinstance(dwell, dict):
        dwell_of = lambda q: float(dwell[q])  # noqa: E731
        cumulative = lambda k: t0 + sum(  # noqa: E731
            dwell_of(mode_order[i % len(mode_order)]) for i in range(k)
        )
    else:
        step = float(dwell)
        dwell_of = lambda q: step  # noqa: E731
        cumulative = lambda k: t0 + k * step  # noqa: E731
    events = []
    k = 0
    while cumulative(k) < horizon - TIME_EPS:
        mode = mode_order[k % len(mode_order)]
        if events and events[-1][1] == mode:
            raise ValueError("mode order repeats a mode consecutively")
        if dwell_of(mode) <= 0:
            raise ValueError("dwell times must be positive")
        events.append((cumulative(k), mode))
        k += 1
        if len(mode_order) == 1:
            break
    return SwitchingSignal(t0, tuple(events), horizon)


def generate_random(modes, bounds: DwellBounds, t0: float, horizon: float,
                    seed: int, margin: float = 1e-6,
                    max_dwell: float = 10.0) -> SwitchingSignal:
    """Seeded random compliant signal: every activation length is drawn
    uniformly from the mode's admissible interval and the next mode is a seeded
    uniform choice among the other modes, so verify_per_activation passes by
    construction."""
    modes = list(modes)
    if not modes:
        raise ValueError("empty mode list")
    intervals = {}
    for mode in modes:
        low = bounds.lower.get(mode)
        high = bounds.upper.get(mode)
        lo = (low + margin) if low is not None else margin
        hi = (high - margin) if high is not None else max_dwell
        if lo >= hi:
            raise ValueError(
                f"mode {mode} has an empty admissible dwell interval "
                f"[{lo:.6g}, {hi:.6g}] (bounds infeasible under strict inequalities)"
            )
        intervals[mode] = (lo, hi)
    rng = np.random.default_rng(seed)
    events = []
    t = t0
    mode = modes[int(rng.integers(0, len(modes)))]
    while t < horizon - TIME_EPS:
        events.append((t, mode))
        lo, hi = intervals[mode]
        t += float(rng.uniform(lo, hi))
        if len(modes) == 1:
            break
        choices = [m for m in modes if m != mode]
        mode = choices[int(rng.integers(0, len(choices)))]
    return SwitchingSignal(t0, tuple(events), horizon)


def write_signal_csv(sig: SwitchingSignal, path) -> None:
    from .ioutil import atomic_write_text

    lines = ["time,mode"]
    for t, mode in sig.events:
        lines.append(f"{t!r},{mode}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_signal_csv(path, horizon: float | None = None) -> SwitchingSignal:
    import csv
    from pathlib import Path

    rows = list(csv.DictReader(Path(path).open(encoding="utf-8")))
    if not rows:
        raise ValueError(f"empty signal file {path}")
    events = tuple((float(r["time"]), int(r["mode"])) for r in rows)
    t0 = events[0][0]
    if horizon is None:
        # without an explicit horizon, extend past the last switch by the
        # median dwell so the final activation has nonzero length
        if len(events) > 1:
            dwells = [b[0] - a[0] for a, b in zip(events, events[1:])]
            horizon = events[-1][0] + float(np.median(dwells))
        else:
            horizon = t0 + 1.0
    return SwitchingSignal(t0, events, horizon)
