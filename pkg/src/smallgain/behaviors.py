"""Cascade stage primitives and their static gain data.

Three kinds of stage are supported: pure transport delays, memoryless
(pointwise) maps, and scalar stages with dynamics

    x' = -alpha(x) + u * beta(x)   on an interval [a, b],

where alpha is strictly increasing with alpha(a) = 0 and beta is strictly
decreasing with beta(b) = 0.  Those sign conditions make [a, b] invariant
for any nonnegative input and give each constant input u a unique resting
point: the root of g(x) := alpha(x) / beta(x) = u.  The inverse of g is
the stage's equilibrium locator, and its Lipschitz constant is the
stage's linear gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, InvalidStageError
from .signals import Signal

__all__ = [
    "Affine",
    "Hill",
    "Table",
    "MemorylessMap",
    "Identity",
    "Scale",
    "Inhibition",
    "TableLookup",
    "Delay",
    "ScalarMonotoneOde",
    "Feedback",
    "CascadeSpec",
    "EquilibriumMap",
    "apply_delay",
    "apply_memoryless",
    "lipschitz_estimate",
]

_VALIDATION_GRID = 1001
_ROOT_TOL = 1e-9
_BISECT_TOL = 1e-12


# ---------------------------------------------------------------------------
# Scalar function specs for alpha and beta


@dataclass(frozen=True)
class Affine:
    """f(x) = offset + slope * x."""

    offset: float
    slope: float

    def __call__(self, x):
        if isinstance(x, float):
            return self.offset + self.slope * x
        return self.offset + self.slope * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class Hill:
    """Saturating kinetics: scale * s**p / (threshold**p + s**p).

    The shifted argument s is (x - root) for direction "up" and
    (root - x) for direction "down", clamped at zero, so the function
    vanishes at the root and is monotone away from it.
    """

    scale: float
    threshold: float
    exponent: float
    root: float = 0.0
    direction: str = "up"

    def __post_init__(self):
        if self.scale <= 0 or self.threshold <= 0 or self.exponent <= 0:
            raise ConfigError("Hill needs scale, threshold, exponent all > 0")
        if self.direction not in ("up", "down"):
            raise ConfigError(f"Hill direction must be 'up' or 'down', got {self.direction!r}")

    def __call__(self, x):
        if isinstance(x, float):
            s = x - self.root if self.direction == "up" else self.root - x
            if s <= 0.0:
                return 0.0
            sp = s**self.exponent
            return self.scale * sp / (self.threshold**self.exponent + sp)
        x = np.asarray(x, dtype=float)
        s = x - self.root if self.direction == "up" else self.root - x
        s = np.maximum(s, 0.0)
        sp = s**self.exponent
        return self.scale * sp / (self.threshold**self.exponent + sp)


@dataclass(frozen=True)
class Table:
    """Monotone breakpoint table with linear interpolation, clamped outside."""

    xs: tuple[float, ...]
    ys: tuple[float, ...]

    def __post_init__(self):
        xs = tuple(float(v) for v in self.xs)
        ys = tuple(float(v) for v in self.ys)
        if len(xs) != len(ys) or len(xs) < 2:
            raise ConfigError("table needs matching x/y lists with >= 2 entries")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ConfigError("table x values must be strictly increasing")
        up = all(b > a for a, b in zip(ys, ys[1:]))
        down = all(b < a for a, b in zip(ys, ys[1:]))
        if not (up or down):
            raise ConfigError("table y values must be strictly monotone")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.xs, self.ys)


def _eval_fn(fn, x):
    """Evaluate a function spec or plain callable on an array, looping if needed."""
    arr = np.asarray(x, dtype=float)
    try:
        out = np.asarray(fn(arr), dtype=float)
        if out.shape == arr.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(fn(float(v))) for v in arr.ravel()]).reshape(arr.shape)


# ---------------------------------------------------------------------------
# Memoryless maps


class MemorylessMap:
    """A pointwise map applied sample by sample to a signal."""

    def __call__(self, x):
        raise NotImplementedError

    def lipschitz(self, interval: tuple[float, float] | None = None) -> float:
        """Lipschitz constant, globally or restricted to an input interval."""
        raise NotImplementedError

    def map_interval(self, interval: tuple[float, float]) -> tuple[float, float]:
        """Image of a closed interval (maps here are monotone)."""
        lo, hi = interval
        a = float(np.min(self(np.array([lo, hi]))))
        b = float(np.max(self(np.array([lo, hi]))))
        return (a, b)


@dataclass(frozen=True)
class Identity(MemorylessMap):
    def __call__(self, x):
        return np.asarray(x, dtype=float)

    def lipschitz(self, interval=None) -> float:
        return 1.0


@dataclass(frozen=True)
class Scale(MemorylessMap):
    factor: float

    def __call__(self, x):
        return self.factor * np.asarray(x, dtype=float)

    def lipschitz(self, interval=None) -> float:
        return abs(self.factor)


@dataclass(frozen=True)
class Inhibition(MemorylessMap):
    """x -> mu / (1 + k * x) on x >= 0; constant mu when k = 0."""

    mu: float
    k: float

    def __post_init__(self):
        if self.mu <= 0:
            raise ConfigError(f"inhibition needs mu > 0, got {self.mu}")
        if self.k < 0:
            raise ConfigError(f"inhibition needs k >= 0, got {self.k}")

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0.0):
            raise DomainError("inhibition map is defined for x >= 0 only")
        return self.mu / (1.0 + self.k * arr)

    def lipschitz(self, interval=None) -> float:
        if interval is None:
            return self.k * self.mu
        lo, hi = interval
        if lo < 0:
            raise DomainError("inhibition interval must satisfy lo >= 0")
        return self.k * self.mu / (1.0 + self.k * lo) ** 2


@dataclass(frozen=True)
class TableLookup(MemorylessMap):
    """Monotone interpolation table used as a pointwise map."""

    table: Table

    def __call__(self, x):
        return self.table(x)

    def lipschitz(self, interval=None) -> float:
        xs = np.array(self.table.xs)
        ys = np.array(self.table.ys)
        slopes = np.abs(np.diff(ys) / np.diff(xs))
        if interval is not None:
            lo, hi = interval
            keep = (xs[1:] > lo) & (xs[:-1] < hi)
            if np.any(keep):
                slopes = slopes[keep]
        return float(slopes.max())


# ---------------------------------------------------------------------------
# Stages


@dataclass(frozen=True)
class Delay:
    """Pure transport delay by tau seconds."""

    tau: float

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau >= 0.0):
            raise ConfigError(f"delay must be >= 0, got {self.tau}")


@dataclass(frozen=True)
class ScalarMonotoneOde:
    """One scalar stage x' = -alpha(x) + u * beta(x) on [a, b].

    Construction validates, on a dense grid, that alpha is strictly
    increasing with alpha(a) = 0, beta strictly decreasing with
    beta(b) = 0, and both nonnegative on the interval.
    """

    alpha: object
    beta: object
    interval: tuple[float, float]

    def __post_init__(self):
        a, b = (float(self.interval[0]), float(self.interval[1]))
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise InvalidStageError(f"state interval must satisfy a < b, got [{a}, {b}]")
        object.__setattr__(self, "interval", (a, b))
        xs = np.linspace(a, b, _VALIDATION_GRID)
        al = _eval_fn(self.alpha, xs)
        be = _eval_fn(self.beta, xs)
        if not (np.all(np.isfinite(al)) and np.all(np.isfinite(be))):
            raise InvalidStageError("alpha/beta must be finite on the state interval")
        scale_a = max(1.0, float(np.abs(al).max()))
        scale_b = max(1.0, float(np.abs(be).max()))
        if abs(al[0]) > _ROOT_TOL * scale_a:
            raise InvalidStageError(f"alpha({a}) = {al[0]:.3e}, expected 0")
        if abs(be[-1]) > _ROOT_TOL * scale_b:
            raise InvalidStageError(f"beta({b}) = {be[-1]:.3e}, expected 0")
        if np.any(np.diff(al) <= 0):
            raise InvalidStageError("alpha must be strictly increasing on [a, b]")
        if np.any(np.diff(be) >= 0):
            raise InvalidStageError("beta must be strictly decreasing on [a, b]")
        if np.any(al < -_ROOT_TOL * scale_a) or np.any(be < -_ROOT_TOL * scale_b):
            raise InvalidStageError("alpha and beta must be nonnegative on [a, b]")

    def f(self, x, u):
        """Right-hand side -alpha(x) + u * beta(x)."""
        return -_eval_fn(self.alpha, x) + np.asarray(u, dtype=float) * _eval_fn(self.beta, x)

    def f_scalar(self, x: float, u: float) -> float:
        """Scalar fast path for tight integration loops."""
        return -float(self.alpha(x)) + u * float(self.beta(x))


@dataclass(frozen=True)
class Feedback:
    """Inhibitory closure: the final state, delayed by tau, divides a
    constant drive mu via mu / (1 + k * x) and feeds the first stage."""

    mu: float
    k: float
    tau: float = 0.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ConfigError(f"feedback needs mu > 0, got {self.mu}")
        if self.k < 0:
            raise ConfigError(f"feedback needs k >= 0, got {self.k}")
        if self.tau < 0:
            raise ConfigError(f"feedback delay must be >= 0, got {self.tau}")

    def psi(self, x):
        return Inhibition(self.mu, self.k)(x)


Stage = Delay | MemorylessMap | ScalarMonotoneOde


@dataclass(frozen=True)
class CascadeSpec:
    """An ordered chain of stages, optionally closed by inhibitory feedback."""

    stages: tuple
    feedback: Feedback | None = None

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages:
            raise ConfigError("cascade needs at least one stage")
        for i, st in enumerate(stages):
            if not isinstance(st, (Delay, MemorylessMap, ScalarMonotoneOde)):
                raise ConfigError(f"stage {i} has unsupported type {type(st).__name__}")
        if not any(isinstance(st, ScalarMonotoneOde) for st in stages):
            raise ConfigError("cascade needs at least one dynamic stage")
        object.__setattr__(self, "stages", stages)

    def ode_stages(self) -> list[tuple[int, ScalarMonotoneOde]]:
        return [(i, s) for i, s in enumerate(self.stages) if isinstance(s, ScalarMonotoneOde)]

    @property
    def n_odes(self) -> int:
        return len(self.ode_stages())

    def without_feedback(self) -> "CascadeSpec":
        return CascadeSpec(self.stages, None)


# ---------------------------------------------------------------------------
# Signal-level operations


def apply_delay(sig: Signal, tau: float, history=None) -> Signal:
    """Shift a signal by tau; samples before the record come from ``history``.

    ``history`` may be a constant, a callable of time, or a Signal covering
    [t0 - tau, t0].  Output keeps the input's sampling grid.  A zero delay
    returns the input unchanged.
    """
    if tau < 0:
        raise DomainError(f"delay must be >= 0, got {tau}")
    if tau == 0.0:
        return sig
    if history is None:
        raise ConfigError(f"delay of {tau} needs history data on [-tau, 0]")
    out = np.empty_like(sig.samples)
    ts = sig.times()
    for i, t in enumerate(ts):
        src = t - tau
        if src >= sig.t0:
            out[i] = sig.value_at(src)
        else:
            out[i] = _eval_history(history, src, sig.dim)
    return Signal(sig.t0, sig.dt, out)


def _eval_history(history, t: float, dim: int) -> np.ndarray:
    if isinstance(history, Signal):
        return history.value_at(t)
    if callable(history):
        return np.broadcast_to(np.asarray(history(t), dtype=float), (dim,))
    return np.full(dim, float(history))


def apply_memoryless(sig: Signal, psi: MemorylessMap) -> Signal:
    """Apply a pointwise map to every sample, keeping the grid."""
    if isinstance(psi, Identity):
        return sig
    return Signal(sig.t0, sig.dt, psi(sig.samples))


def lipschitz_estimate(fn, interval: tuple[float, float], n_grid: int = 10001) -> float:
    """Largest adjacent difference quotient of ``fn`` on a uniform grid.

    This is a lower bound on the true Lipschitz constant that tightens as
    ``n_grid`` grows; it is an estimate, not a certificate of smoothness.
    """
    lo, hi = (float(interval[0]), float(interval[1]))
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ConfigError(f"interval must satisfy lo < hi, got [{lo}, {hi}]")
    if n_grid < 2:
        raise ConfigError(f"n_grid must be >= 2, got {n_grid}")
    xs = np.linspace(lo, hi, n_grid)
    ys = _eval_fn(fn, xs)
    if not np.all(np.isfinite(ys)):
        bad = xs[~np.isfinite(ys)][0]
        raise DomainError(f"function undefined at grid point x = {bad}")
    h = xs[1] - xs[0]
    return float(np.abs(np.diff(ys)).max() / h)


# ---------------------------------------------------------------------------
# Equilibrium map g = alpha / beta and its inverse


class EquilibriumMap:
    """g(x) = alpha(x) / beta(x) and its inverse on a validated stage.

    g is strictly increasing from g(a) = 0 and blows up at b, so each
    input level u >= 0 has exactly one resting state g_inv(u) in [a, b).
    The inverse is computed by bisection on the sign of the stage
    right-hand side (guaranteed by strict monotonicity), and the
    round trip g_inv(g(x)) = x is verified on a grid at construction.
    """

    def __init__(self, stage: ScalarMonotoneOde):
        self.stage = stage
        a, b = stage.interval
        self._iters = max(8, int(math.ceil(math.log2(max((b - a) / _BISECT_TOL, 2.0)))) + 2)
        xs = a + (b - a) * np.linspace(0.0, 0.95, 39)
        back = self.g_inv(self.g(xs))
        err = float(np.abs(back - xs).max())
        if err > 1e-10:
            raise InvalidStageError(
                f"equilibrium map failed round-trip verification (error {err:.3e})"
            )

    def g(self, x):
        """Input level that holds the state x at rest."""
        stage = self.stage
        al = _eval_fn(stage.alpha, x)
        be = _eval_fn(stage.beta, x)
        with np.errstate(divide="ignore"):
            out = np.where(be > 0.0, al / np.where(be > 0.0, be, 1.0), np.inf)
        if np.ndim(x) == 0:
            return float(out)
        return out

    def g_inv(self, u):
        """Resting state for input level u >= 0, by bisection to 1e-12."""
        arr = np.asarray(u, dtype=float)
        if np.any(arr < 0.0):
            raise DomainError("g_inv is defined for u >= 0 only")
        a, b = self.stage.interval
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr)
        lo = np.full(arr.shape, a)
        hi = np.full(arr.shape, b)
        for _ in range(self._iters):
            mid = 0.5 * (lo + hi)
            fm = self.stage.f(mid, arr)
            pos = fm > 0.0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
        out = 0.5 * (lo + hi)
        return float(out[0]) if scalar else out
