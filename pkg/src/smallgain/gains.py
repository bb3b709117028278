"""Comparison-function algebra for small-gain certificates.

A gain is a continuous, strictly increasing, unbounded function from
[0, inf) to [0, inf) that vanishes at 0.  Gains bound how a stage maps
input amplitude to output amplitude; composing stage gains and testing
the loop composition against the identity decides a certificate.

The one permitted degenerate case is ``Linear(0.0)``: the gain of a
constant-output behavior.  It is not strictly increasing, but it
satisfies every gain inequality vacuously and is flagged through
``is_zero_gain``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "GainFunction",
    "Linear",
    "PowerLaw",
    "PiecewiseLinear",
    "Composed",
    "GridSpec",
    "ContractionVerdict",
    "identity_gain",
    "compose",
    "is_contraction",
]


def _check_arg(r):
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0.0):
        raise DomainError("gain functions are defined for r >= 0 only")
    return arr


class GainFunction:
    """Base class; subclasses implement ``_eval`` on nonnegative arrays."""

    def __call__(self, r):
        """Evaluate at a nonnegative scalar or array; negative input raises."""
        arr = _check_arg(r)
        out = self._eval(arr)
        if np.isscalar(r) or arr.ndim == 0:
            return float(out)
        return out

    def _eval(self, arr: np.ndarray):
        raise NotImplementedError

    @property
    def is_zero_gain(self) -> bool:
        """True for the degenerate constant-zero gain (constant behaviors)."""
        return False


@dataclass(frozen=True)
class Linear(GainFunction):
    """r -> slope * r.  Slope 0 is the flagged zero gain; slope < 0 is invalid."""

    slope: float

    def __post_init__(self):
        if not math.isfinite(self.slope) or self.slope < 0.0:
            raise ConfigError(f"Linear slope must be finite and >= 0, got {self.slope}")

    def _eval(self, arr):
        return self.slope * arr

    @property
    def is_zero_gain(self) -> bool:
        return self.slope == 0.0


@dataclass(frozen=True)
class PowerLaw(GainFunction):
    """r -> coeff * r**exponent with coeff > 0 and exponent > 0."""

    coeff: float
    exponent: float

    def __post_init__(self):
        if not (math.isfinite(self.coeff) and self.coeff > 0.0):
            raise ConfigError(f"PowerLaw coeff must be > 0, got {self.coeff}")
        if not (math.isfinite(self.exponent) and self.exponent > 0.0):
            raise ConfigError(f"PowerLaw exponent must be > 0, got {self.exponent}")

    def _eval(self, arr):
        return self.coeff * arr**self.exponent


@dataclass(frozen=True)
class PiecewiseLinear(GainFunction):
    """Linear interpolation through breakpoints, extrapolated at the final slope.

    Breakpoints are (r, value) pairs, strictly increasing in both
    coordinates.  An anchor at (0, 0) is implied and inserted if absent,
    so the function always vanishes at 0.  The final slope must be
    positive to keep the function unbounded.
    """

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(r), float(v)) for r, v in self.breakpoints)
        if not pts or pts[0][0] > 0.0:
            pts = ((0.0, 0.0),) + pts
        if pts[0] != (0.0, 0.0):
            raise ConfigError("piecewise gain must start at (0, 0)")
        rs = [p[0] for p in pts]
        vs = [p[1] for p in pts]
        if any(not math.isfinite(x) for x in rs + vs):
            raise ConfigError("piecewise breakpoints must be finite")
        if any(r2 <= r1 for r1, r2 in zip(rs, rs[1:])):
            raise ConfigError("piecewise breakpoints must be strictly increasing in r")
        if any(v2 <= v1 for v1, v2 in zip(vs, vs[1:])):
            raise ConfigError("piecewise gain values must be strictly increasing")
        if len(pts) < 2:
            raise ConfigError("piecewise gain needs at least one breakpoint beyond (0, 0)")
        object.__setattr__(self, "breakpoints", pts)

    def _eval(self, arr):
        rs = np.array([p[0] for p in self.breakpoints])
        vs = np.array([p[1] for p in self.breakpoints])
        out = np.interp(arr, rs, vs)
        final_slope = (vs[-1] - vs[-2]) / (rs[-1] - rs[-2])
        beyond = arr > rs[-1]
        if np.any(beyond):
            out = np.where(beyond, vs[-1] + final_slope * (arr - rs[-1]), out)
        return out


@dataclass(frozen=True)
class Composed(GainFunction):
    """Right-to-left composition: Composed([f, g]) evaluates f(g(r))."""

    parts: tuple[GainFunction, ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ConfigError("Composed needs at least one part")
        object.__setattr__(self, "parts", parts)

    def _eval(self, arr):
        out = arr
        for part in reversed(self.parts):
            out = part._eval(out)
        return out

    @property
    def is_zero_gain(self) -> bool:
        return any(p.is_zero_gain for p in self.parts)


def identity_gain() -> Linear:
    """The identity comparison function r -> r."""
    return Linear(1.0)


def _flatten(gamma: GainFunction) -> tuple[GainFunction, ...]:
    if isinstance(gamma, Composed):
        return gamma.parts
    return (gamma,)


def compose(outer: GainFunction, inner: GainFunction) -> GainFunction:
    """Gain of a two-stage chain: evaluates as outer(inner(r)).

    Linear pairs collapse to ``Linear(outer.slope * inner.slope)``;
    everything else becomes a flat ``Composed``, which makes composition
    structurally associative.
    """
    if isinstance(outer, Linear) and isinstance(inner, Linear):
        return Linear(outer.slope * inner.slope)
    return Composed(_flatten(outer) + _flatten(inner))


@dataclass(frozen=True)
class GridSpec:
    """Log-spaced evaluation grid on [r_min, r_max] with r_min > 0."""

    r_min: float = 1e-9
    r_max: float = 1e9
    points_per_decade: int = 50

    def __post_init__(self):
        if not (0.0 < self.r_min < self.r_max):
            raise ConfigError(f"grid needs 0 < r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if self.points_per_decade < 1:
            raise ConfigError("grid needs at least one point per decade")

    def values(self) -> np.ndarray:
        lo = math.log10(self.r_min)
        hi = math.log10(self.r_max)
        n = int(math.ceil((hi - lo) * self.points_per_decade)) + 1
        if n < 2:
            n = 2
        return np.logspace(lo, hi, n)


@dataclass(frozen=True)
class ContractionVerdict:
    """Outcome of the loop contraction test; witness is a failing radius."""

    holds: bool
    witness: float | None = None


def is_contraction(
    gamma1: GainFunction,
    gamma2: GainFunction,
    grid: GridSpec | None = None,
    margin: float = 1e-6,
) -> ContractionVerdict:
    """Decide whether gamma1(gamma2(r)) < r for all r > 0.

    Two linear gains are decided exactly from the sign of the slope
    product minus one (a scale-invariant test, so the reported witness is
    the canonical r = 1).  Any other pair is checked on the grid with a
    strictness margin: the composition must stay below (1 - margin) * r
    at every grid point, and the first failing point is returned as the
    witness.  A finite grid cannot certify a strict inequality; the
    margin converts it into a checkable one.
    """
    if not (0.0 < margin < 1.0):
        raise ConfigError(f"margin must lie in (0, 1), got {margin}")
    if isinstance(gamma1, Linear) and isinstance(gamma2, Linear):
        if gamma1.slope * gamma2.slope < 1.0:
            return ContractionVerdict(holds=True)
        return ContractionVerdict(holds=False, witness=1.0)
    if grid is None:
        grid = GridSpec()
    rs = grid.values()
    if rs.size == 0:
        raise ConfigError("contraction grid is empty")
    vals = gamma1(gamma2(rs))
    failing = vals > (1.0 - margin) * rs
    if np.any(failing):
        return ContractionVerdict(holds=False, witness=float(rs[np.argmax(failing)]))
    return ContractionVerdict(holds=True)
