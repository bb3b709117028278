"""Decrease-function verification and per-stage gain extraction.

A candidate certificate function V for a stage must strictly decrease
along trajectories whenever the state is off V's zero set and the input
stays in a given interval U.  The check here is a dense grid search over
state and input; it either confirms a strictly negative directional
derivative everywhere (reporting the worst margin found) or returns a
concrete witness point.

The gain side: for U = [c, d] the stage's resting states sweep
[g_inv(c), g_inv(d)], and the distance to that interval is the canonical
decrease function.  The Lipschitz constant of g_inv over (a slight
widening of) U bounds the resting-set diameter by a linear function of
|U|, which is exactly the stage's linear gain.  Chaining those gains
through the cascade, with input intervals either held at each stage's
full admissible range ("global") or propagated through the equilibrium
maps ("relative"), yields the forward gain of the whole chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .behaviors import (
    CascadeSpec,
    Delay,
    EquilibriumMap,
    MemorylessMap,
    ScalarMonotoneOde,
    _eval_fn,
    lipschitz_estimate,
)
from .errors import ConfigError, DomainError, ModelingError
from .gains import GainFunction, Linear

__all__ = [
    "DistanceToInterval",
    "CustomDecrease",
    "VerificationReport",
    "StageGain",
    "CascadeGain",
    "PerStageGain",
    "verify_u_decrease",
    "stage_gain",
    "cascade_gain",
]

_X_GRID = 2001
_U_GRID = 101
_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class DistanceToInterval:
    """V(x) = distance from x to a target interval; zero set = the target."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo <= self.hi):
            raise ConfigError(f"target interval must satisfy lo <= hi, got [{self.lo}, {self.hi}]")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.maximum(self.lo - x, 0.0) + np.maximum(x - self.hi, 0.0)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.lo, -1.0, np.where(x > self.hi, 1.0, 0.0))

    def distance_to_zero_set(self, x):
        return self.value(x)


@dataclass(frozen=True)
class CustomDecrease:
    """User-supplied nonnegative V; gradient optional (finite differences else)."""

    value_fn: object
    gradient_fn: object | None = None

    def value(self, x):
        return _eval_fn(self.value_fn, x)

    def gradient(self, x):
        if self.gradient_fn is None:
            return None
        return _eval_fn(self.gradient_fn, x)

    def distance_to_zero_set(self, x):
        # Zero set located numerically on the evaluation grid itself.
        x = np.asarray(x, dtype=float)
        vals = self.value(x)
        zeros = x[np.abs(vals) <= _ZERO_TOL]
        if zeros.size == 0:
            return np.full(x.shape, np.inf)
        return np.abs(x[:, None] - zeros[None, :]).min(axis=1)


@dataclass(frozen=True)
class Witness:
    x: float
    u: float
    directional_derivative: float


@dataclass(frozen=True)
class VerificationReport:
    """Grid-check outcome; ok implies no witness.  ``margin_found`` is the
    largest directional derivative seen (negative on success); ``vacuous``
    marks the degenerate case where the zero set covered the whole grid."""

    ok: bool
    witness: Witness | None
    margin_found: float
    vacuous: bool = False


def verify_u_decrease(
    V,
    stage: ScalarMonotoneOde,
    U: tuple[float, float],
    exclusion_eps: float | None = None,
    n_grid: int = _X_GRID,
    n_u_grid: int = _U_GRID,
) -> VerificationReport:
    """Check grad V(x) * f(x, u) < 0 off V's zero set, for all u in U.

    The state grid covers [a, b] minus a collar of radius
    ``exclusion_eps`` around the zero set (V is typically not
    differentiable exactly on its boundary).  The default collar is
    1e-6 * (b - a).
    """
    a, b = stage.interval
    c, d = (float(U[0]), float(U[1]))
    if c > d:
        raise DomainError(f"input interval must satisfy c <= d, got [{c}, {d}]")
    if exclusion_eps is None:
        exclusion_eps = 1e-6 * (b - a)
    if exclusion_eps <= 0:
        raise ConfigError(f"exclusion_eps must be positive, got {exclusion_eps}")

    xs = np.linspace(a, b, n_grid)
    keep = V.distance_to_zero_set(xs) >= exclusion_eps
    xs = xs[keep]
    if xs.size == 0:
        return VerificationReport(ok=True, witness=None, margin_found=-math.inf, vacuous=True)

    grad = V.gradient(xs)
    if grad is None:
        h = (b - a) / (10.0 * n_grid)
        grad = (V.value(xs + h) - V.value(xs - h)) / (2.0 * h)

    us = np.linspace(c, d, 1 if c == d else n_u_grid)
    al = _eval_fn(stage.alpha, xs)
    be = _eval_fn(stage.beta, xs)
    # dd[i, j] = V'(x_i) * f(x_i, u_j)
    dd = grad[:, None] * (-al[:, None] + us[None, :] * be[:, None])
    worst_flat = int(np.argmax(dd))
    i, j = np.unravel_index(worst_flat, dd.shape)
    margin = float(dd[i, j])
    if margin < 0.0:
        return VerificationReport(ok=True, witness=None, margin_found=margin)
    return VerificationReport(
        ok=False,
        witness=Witness(x=float(xs[i]), u=float(us[j]), directional_derivative=margin),
        margin_found=margin,
    )


@dataclass(frozen=True)
class StageGain:
    """Linear gain of one stage on an input interval, with the resting set."""

    gain: Linear
    z_set: tuple[float, float]
    input_interval: tuple[float, float]


def stage_gain(
    stage: ScalarMonotoneOde, U: tuple[float, float], n_grid: int = 10001
) -> StageGain:
    """Gain of a stage for inputs settling into U = [c, d].

    The resting set is [g_inv(c), g_inv(d)]; the gain slope is the
    Lipschitz estimate of g_inv over U widened slightly on both sides
    (clamped at 0), so the same slope also covers inputs that only
    converge to U.  The slope serves as both the amplitude gain and the
    limit-discrepancy gain of the stage on U.
    """
    c, d = (float(U[0]), float(U[1]))
    if not (0.0 <= c <= d):
        raise DomainError(f"input interval must satisfy 0 <= c <= d, got [{c}, {d}]")
    em = EquilibriumMap(stage)
    z = (em.g_inv(c), em.g_inv(d))
    w = 1e-3 * (d - c) + 1e-6
    probe = (max(0.0, c - w), d + w)
    lam = lipschitz_estimate(em.g_inv, probe, n_grid)
    return StageGain(gain=Linear(lam), z_set=z, input_interval=(c, d))


@dataclass(frozen=True)
class PerStageGain:
    stage_index: int
    kind: str  # "ode" | "memoryless" | "delay"
    input_interval: tuple[float, float]
    lam: float
    z_set: tuple[float, float] | None
    # filled in by certification: grid check that the distance to z_set
    # strictly decreases under every input in the interval
    decrease_ok: bool | None = None
    decrease_margin: float | None = None


@dataclass(frozen=True)
class CascadeGain:
    gain: GainFunction
    per_stage: tuple[PerStageGain, ...]


def cascade_gain(
    cascade: CascadeSpec,
    U0: tuple[float, float],
    mode: str = "global",
    n_grid: int = 10001,
    full_U0: tuple[float, float] | None = None,
) -> CascadeGain:
    """Compose per-stage gains along the chain, starting from input range U0.

    Delays pass intervals through unchanged and contribute a unit factor.
    Memoryless stages map interval endpoints (order-reversing when
    decreasing) and contribute their Lipschitz constant: the global one in
    "global" mode, the interval-restricted one in "relative" mode.
    Dynamic stages contribute their stage gain on the incoming interval;
    in "global" mode the interval handed downstream is the full state
    interval, in "relative" mode it is the resting set, which shrinks the
    downstream estimates.

    In relative mode each dynamic stage's estimate is capped at the
    estimate over the full-range interval it would see in global mode
    (starting from ``full_U0``, default U0): the true restricted constant
    never exceeds the full-range one, but finite-grid estimates can cross
    by a hair, and the cap keeps relative certificates at least as strong
    as global ones.
    """
    if mode not in ("global", "relative"):
        raise ConfigError(f"mode must be 'global' or 'relative', got {mode!r}")
    lo, hi = (float(U0[0]), float(U0[1]))
    if lo > hi:
        raise DomainError(f"U0 must satisfy lo <= hi, got [{lo}, {hi}]")
    interval = (lo, hi)
    full = interval if full_U0 is None else (float(full_U0[0]), float(full_U0[1]))
    factors: list[float] = []
    table: list[PerStageGain] = []
    for idx, st in enumerate(cascade.stages):
        if isinstance(st, Delay):
            table.append(PerStageGain(idx, "delay", interval, 1.0, None))
        elif isinstance(st, MemorylessMap):
            try:
                lam = st.lipschitz(interval if mode == "relative" else None)
                out = st.map_interval(interval)
                full_out = st.map_interval(full)
            except DomainError as exc:
                raise ModelingError(f"stage {idx}: {exc}", stage_index=idx) from exc
            factors.append(lam)
            table.append(PerStageGain(idx, "memoryless", interval, lam, None))
            interval = out
            full = full_out
        else:
            if interval[0] < 0.0:
                raise ModelingError(
                    f"stage {idx}: propagated input interval [{interval[0]}, {interval[1]}] "
                    "includes negative inputs",
                    stage_index=idx,
                )
            sg = stage_gain(st, interval, n_grid)
            lam = sg.gain.slope
            if mode == "relative":
                full_sg = stage_gain(st, full, n_grid)
                lam = min(lam, full_sg.gain.slope)
            factors.append(lam)
            table.append(PerStageGain(idx, "ode", interval, lam, sg.z_set))
            interval = sg.z_set if mode == "relative" else st.interval
            full = st.interval
    return CascadeGain(gain=Linear(math.prod(factors)), per_stage=tuple(table))
