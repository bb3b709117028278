"""Fixed-step integration of open cascades and closed feedback loops.

Dynamic stages advance with classical fourth-order Runge-Kutta on a
shared uniform grid.  Delayed couplings are resolved by the method of
steps: a delayed lookup reads the piecewise-linear interpolant of the
already-committed samples (or the pre-time-zero history), and lookups
that land beyond the last committed sample use the interpolant frozen at
the step start.  Because every stage sees a fixed input function over a
step, stages can be advanced independently and the whole run is
deterministic.

Delayed state lookups are clamped into the owning stage's interval:
the true state lives there, and the linear extrapolation device must not
feed neighbouring stages values outside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .behaviors import (
    CascadeSpec,
    Delay,
    MemorylessMap,
    ScalarMonotoneOde,
)
from .errors import ConfigError, InvarianceViolationError
from .signals import Signal

__all__ = [
    "SimConfig",
    "History",
    "Trajectory",
    "simulate_open",
    "simulate_closed",
    "ensemble",
    "integrate_stage_ensemble",
]


@dataclass(frozen=True)
class SimConfig:
    """Step size, horizon, clamping tolerance, and ensemble seed."""

    dt: float = 0.01
    horizon: float = 200.0
    clamp_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.horizon < 10.0 * self.dt:
            raise ConfigError(
                f"horizon {self.horizon} too short; need at least 10 steps of {self.dt}"
            )
        if self.clamp_tol <= 0.0:
            raise ConfigError(f"clamp_tol must be positive, got {self.clamp_tol}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


class History:
    """Pre-time-zero data: one entry per dynamic stage, optionally one for
    the external input.

    Each entry is a constant, a callable of time, or a Signal covering
    [-tau_max, 0].  Entry i also supplies the initial state of dynamic
    stage i through its value at t = 0.
    """

    def __init__(self, states: Sequence, input_history=None):
        self._states = tuple(states)
        self._input = input_history

    @classmethod
    def constant(cls, values: Sequence[float], input_history=None) -> "History":
        return cls(tuple(float(v) for v in values), input_history)

    @property
    def n_states(self) -> int:
        return len(self._states)

    def state_value(self, i: int, t: float) -> float:
        entry = self._states[i]
        if isinstance(entry, Signal):
            return float(entry.value_at(t)[0])
        if callable(entry):
            return float(entry(t))
        return float(entry)

    @property
    def has_input(self) -> bool:
        return self._input is not None

    def input_value(self, t: float) -> float:
        if self._input is None:
            raise ConfigError("no input history was provided for pre-time-zero lookups")
        entry = self._input
        if isinstance(entry, Signal):
            return float(entry.value_at(t)[0])
        if callable(entry):
            return float(entry(t))
        return float(entry)


@dataclass(frozen=True)
class Trajectory:
    """Integrated states (one scalar signal each), the effective input fed
    to the first dynamic stage, the configuration used, and the largest
    interval overshoot absorbed by clamping."""

    states: tuple[Signal, ...]
    effective_input: Signal
    config: SimConfig
    max_overshoot: float = 0.0

    def to_csv_text(self, header_comments: tuple[str, ...] = ()) -> str:
        """CSV body: one row per instant, columns t, x1, ..., xn, omega."""
        n = self.states[0].n_samples
        ts = self.states[0].times()
        cols = [f"x{i + 1}" for i in range(len(self.states))]
        lines = [f"# {c}" for c in header_comments]
        lines.append("t," + ",".join(cols) + ",omega")
        for k in range(n):
            row = [f"{ts[k]:.17g}"]
            row += [f"{s.samples[k, 0]:.17g}" for s in self.states]
            row.append(f"{self.effective_input.samples[k, 0]:.17g}")
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def to_csv(self, path: str | Path, header_comments: tuple[str, ...] = ()) -> None:
        Path(path).write_text(self.to_csv_text(header_comments))


@dataclass(frozen=True)
class _Segment:
    """Transport between consecutive dynamic stages: total delay plus the
    pointwise maps applied in chain order."""

    delay: float
    maps: tuple[MemorylessMap, ...]


def _parse_chain(cascade: CascadeSpec) -> tuple[list[_Segment], list[ScalarMonotoneOde], _Segment, list[int]]:
    segments: list[_Segment] = []
    odes: list[ScalarMonotoneOde] = []
    ode_indices: list[int] = []
    delay = 0.0
    maps: list[MemorylessMap] = []
    for idx, st in enumerate(cascade.stages):
        if isinstance(st, Delay):
            delay += st.tau
        elif isinstance(st, MemorylessMap):
            maps.append(st)
        else:
            segments.append(_Segment(delay, tuple(maps)))
            odes.append(st)
            ode_indices.append(idx)
            delay = 0.0
            maps = []
    tail = _Segment(delay, tuple(maps))
    return segments, odes, tail, ode_indices


def _apply_maps(maps: tuple[MemorylessMap, ...], v: float) -> float:
    for m in maps:
        v = float(m(v))
    return v


class _Integrator:
    def __init__(self, cascade: CascadeSpec, histories: History, config: SimConfig):
        self.segments, self.odes, self.tail, self.ode_indices = _parse_chain(cascade)
        if histories.n_states != len(self.odes):
            raise ConfigError(
                f"history has {histories.n_states} state entries, cascade has "
                f"{len(self.odes)} dynamic stages"
            )
        self.histories = histories
        self.config = config
        self.dt = config.dt
        self.n_steps = config.n_steps
        self.X = np.empty((self.n_steps + 1, len(self.odes)))
        self.max_overshoot = 0.0
        for i, ode in enumerate(self.odes):
            a, b = ode.interval
            x0 = histories.state_value(i, 0.0)
            if not (a - config.clamp_tol <= x0 <= b + config.clamp_tol):
                raise ConfigError(
                    f"initial state {x0} of dynamic stage {self.ode_indices[i]} lies "
                    f"outside its interval [{a}, {b}]"
                )
            self.X[0, i] = min(max(x0, a), b)

    def state_lookup(self, i: int, t: float, k: int) -> float:
        """x_i at time t, using committed samples 0..k, the frozen-interpolant
        extrapolation past t_k, or the history for t <= 0."""
        if t <= 0.0:
            v = self.histories.state_value(i, t)
        else:
            pos = t / self.dt
            X = self.X
            nearest = round(pos)
            if abs(pos - nearest) < 1e-9 and nearest <= k:
                v = X[int(nearest), i]
            else:
                j = int(pos)
                if j >= k:
                    if k == 0:
                        v = X[0, i]
                    else:
                        v = X[k, i] + (pos - k) * (X[k, i] - X[k - 1, i])
                else:
                    w = pos - j
                    v = X[j, i] + w * (X[j + 1, i] - X[j, i])
        a, b = self.odes[i].interval
        return min(max(v, a), b)

    def run(self, source: Callable[[float, int], float]) -> Trajectory:
        """Advance all stages; ``source(t, k)`` feeds the first dynamic stage."""
        dt = self.dt
        half = 0.5 * dt
        sixth = dt / 6.0
        n_odes = len(self.odes)
        segments = self.segments
        odes = self.odes
        X = self.X
        clamp_tol = self.config.clamp_tol
        for k in range(self.n_steps):
            t = k * dt
            for i in range(n_odes):
                seg = segments[i]
                if i == 0:
                    def v_at(tt):
                        return _apply_maps(seg.maps, source(tt - seg.delay, k))
                else:
                    up = i - 1
                    def v_at(tt):
                        return _apply_maps(seg.maps, self.state_lookup(up, tt - seg.delay, k))
                v0 = v_at(t)
                vh = v_at(t + half)
                v1 = v_at(t + dt)
                ode = odes[i]
                x = X[k, i]
                k1 = ode.f_scalar(x, v0)
                k2 = ode.f_scalar(x + half * k1, vh)
                k3 = ode.f_scalar(x + half * k2, vh)
                k4 = ode.f_scalar(x + dt * k3, v1)
                xn = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                a, b = ode.interval
                overshoot = max(a - xn, xn - b, 0.0)
                if overshoot > 0.0:
                    if overshoot > clamp_tol:
                        raise InvarianceViolationError(
                            f"state of dynamic stage {self.ode_indices[i]} left "
                            f"[{a}, {b}] by {overshoot:.3e} at t = {t + dt:.6g}",
                            stage_index=self.ode_indices[i],
                            time=t + dt,
                        )
                    if self.max_overshoot < overshoot:
                        self.max_overshoot = overshoot
                    xn = min(max(xn, a), b)
                X[k + 1, i] = xn
        omega = np.empty(self.n_steps + 1)
        seg0 = segments[0]
        for k in range(self.n_steps + 1):
            omega[k] = _apply_maps(seg0.maps, source(k * dt - seg0.delay, self.n_steps))
        states = tuple(Signal(0.0, dt, X[:, i]) for i in range(n_odes))
        return Trajectory(
            states=states,
            effective_input=Signal(0.0, dt, omega),
            config=self.config,
            max_overshoot=self.max_overshoot,
        )


def _input_lookup(input_sig: Signal, histories: History, horizon: float):
    if input_sig.t0 > 0.0 or input_sig.end_time < horizon - 1e-9:
        raise ConfigError(
            f"input signal covers [{input_sig.t0}, {input_sig.end_time}], "
            f"needs [0, {horizon}]"
        )

    def look(t: float, _k: int) -> float:
        if t < input_sig.t0:
            return histories.input_value(t)
        return float(input_sig.value_at(t)[0])

    return look


def simulate_open(
    cascade: CascadeSpec, input_signal: Signal, histories: History, config: SimConfig
) -> Trajectory:
    """Integrate the open chain driven by an external input signal.

    The input must cover [0, horizon]; lookups between its samples use
    linear interpolation.  Histories must cover every delay reaching back
    before t = 0 and supply each stage's initial state.
    """
    if cascade.feedback is not None:
        raise ConfigError(
            "cascade has a feedback closure; use simulate_closed or without_feedback()"
        )
    if input_signal.dim != 1:
        raise ConfigError("the external input must be scalar")
    integ = _Integrator(cascade, histories, config)
    return integ.run(_input_lookup(input_signal, histories, config.horizon))


def simulate_closed(
    cascade: CascadeSpec, histories: History, config: SimConfig
) -> Trajectory:
    """Integrate the loop closed by the inhibitory feedback.

    The first stage's drive at time t is mu / (1 + k * y(t - tau_total))
    where y is the final dynamic state passed through any trailing maps
    and tau_total collects the feedback delay plus trailing delays.
    """
    fb = cascade.feedback
    if fb is None:
        raise ConfigError("cascade has no feedback closure; use simulate_open")
    integ = _Integrator(cascade, histories, config)
    last = len(integ.odes) - 1
    tail = integ.tail
    fb_delay = fb.tau + tail.delay
    mu, k_fb = fb.mu, fb.k

    def source(t: float, k: int) -> float:
        v = _apply_maps(tail.maps, integ.state_lookup(last, t - fb_delay, k))
        return mu / (1.0 + k_fb * v)

    return integ.run(source)


def ensemble(cascade: CascadeSpec, config: SimConfig, n_runs: int) -> list[Trajectory]:
    """Closed-loop runs from seeded random constant histories.

    Each run draws one constant per dynamic stage, uniform over that
    stage's interval.  Identical seeds reproduce identical trajectories.
    """
    if n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {n_runs}")
    _, odes, _, _ = _parse_chain(cascade)
    rng = np.random.default_rng(config.seed)
    runs = []
    for _ in range(n_runs):
        values = [float(rng.uniform(a, b)) for a, b in (ode.interval for ode in odes)]
        runs.append(simulate_closed(cascade, History.constant(values), config))
    return runs


def integrate_stage_ensemble(
    stage: ScalarMonotoneOde,
    input_fn: Callable[[float], np.ndarray],
    x0: np.ndarray,
    config: SimConfig,
) -> np.ndarray:
    """Vectorized RK4 for one stage under a batch of input functions.

    ``input_fn(t)`` returns the drive of every batch member at time t
    (evaluated exactly, no interpolation), ``x0`` the initial states.
    Returns the (n_steps + 1, batch) state array; interval clamping
    matches the trajectory integrator.
    """
    a, b = stage.interval
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < a) or np.any(x0 > b):
        raise ConfigError("batch initial states must lie in the stage interval")
    dt = config.dt
    n_steps = config.n_steps
    X = np.empty((n_steps + 1, x0.size))
    X[0] = x0
    half = 0.5 * dt
    sixth = dt / 6.0
    for k in range(n_steps):
        t = k * dt
        u0 = input_fn(t)
        uh = input_fn(t + half)
        u1 = input_fn(t + dt)
        x = X[k]
        k1 = stage.f(x, u0)
        k2 = stage.f(x + half * k1, uh)
        k3 = stage.f(x + half * k2, uh)
        k4 = stage.f(x + dt * k3, u1)
        xn = x + sixth * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        overshoot = float(np.maximum(np.maximum(a - xn, xn - b), 0.0).max())
        if overshoot > config.clamp_tol:
            raise InvarianceViolationError(
                f"batch state left [{a}, {b}] by {overshoot:.3e} at t = {t + dt:.6g}",
                stage_index=0,
                time=t + dt,
            )
        X[k + 1] = np.clip(xn, a, b)
    return X
