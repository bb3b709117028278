"""Uniformly sampled trajectories and their tail estimators.

The central quantity is the tail diameter of a signal: the largest
distance between any two samples in the final stretch of the record.  A
signal converges exactly when this diameter can be driven to zero, so
the estimators here reduce convergence questions to tail geometry.
Estimates are only meaningful when the horizon covers the transient;
callers control the horizon and the tail fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatchError,
    DomainError,
    InsufficientDataError,
)

__all__ = [
    "Signal",
    "BoxSet",
    "asymptotic_amplitude",
    "omega_limit_diameter",
    "converges_to",
    "limit_value",
    "diameter",
]

# Vector tails are thinned to this many points before the exact pairwise
# diameter; thinning error is bounded by the signal's modulus of
# continuity over one stride and is negligible for smooth trajectories.
_MAX_PAIRWISE_POINTS = 4096


@dataclass(frozen=True)
class Signal:
    """A vector-valued trajectory sampled uniformly in time.

    ``samples`` has shape (n, m): n >= 1 instants, m >= 1 coordinates.
    One-dimensional input is promoted to a single-coordinate signal.
    """

    t0: float
    dt: float
    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ConfigError("samples must be a nonempty (n, m) array")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("samples must be finite")
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not math.isfinite(self.t0):
            raise ConfigError(f"t0 must be finite, got {self.t0}")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def end_time(self) -> float:
        return self.t0 + (self.n_samples - 1) * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_samples)

    def value_at(self, t: float) -> np.ndarray:
        """Linear interpolation; clamps at the record ends.

        Positions within 1e-9 steps of a sample snap to it, so delays that
        are whole multiples of dt reproduce samples bit-exactly."""
        pos = (t - self.t0) / self.dt
        if pos <= 0.0:
            return self.samples[0]
        if pos >= self.n_samples - 1:
            return self.samples[-1]
        nearest = round(pos)
        if abs(pos - nearest) < 1e-9:
            return self.samples[int(nearest)]
        j = int(pos)
        w = pos - j
        return self.samples[j] + w * (self.samples[j + 1] - self.samples[j])

    def component(self, index: int) -> "Signal":
        """A single coordinate as a scalar signal."""
        return Signal(self.t0, self.dt, self.samples[:, index])

    def to_csv(self, path: str | Path, header_comments: tuple[str, ...] = ()) -> None:
        """Write ``t,x1,...,xm`` rows at full (17 significant digit) precision."""
        cols = ",".join(f"x{i + 1}" for i in range(self.dim))
        lines = [f"# {c}" for c in header_comments]
        lines.append(f"t,{cols}")
        ts = self.times()
        for i in range(self.n_samples):
            row = ",".join(f"{v:.17g}" for v in self.samples[i])
            lines.append(f"{ts[i]:.17g},{row}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "Signal":
        raw = [
            line
            for line in Path(path).read_text().splitlines()
            if line.strip() and not line.startswith("#")
        ]
        if len(raw) < 2:
            raise ConfigError(f"{path}: no samples")
        data = np.array([[float(v) for v in line.split(",")] for line in raw[1:]])
        ts = data[:, 0]
        if len(ts) > 1:
            steps = np.diff(ts)
            dt = float(steps[0])
            if dt <= 0 or np.any(np.abs(steps - dt) > 1e-9 * max(abs(dt), 1.0)):
                raise ConfigError(f"{path}: time column is not uniformly spaced")
        else:
            dt = 1.0
        return cls(float(ts[0]), dt, data[:, 1:])


@dataclass(frozen=True)
class BoxSet:
    """A product of closed intervals, one per coordinate."""

    lows: np.ndarray
    highs: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lows, dtype=float))
        hi = np.atleast_1d(np.asarray(self.highs, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size < 1:
            raise ConfigError("box bounds must be matching 1-d arrays")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ConfigError("box bounds must be finite")
        if np.any(lo > hi):
            raise ConfigError("box requires lo <= hi in every coordinate")
        lo = lo.copy()
        hi = hi.copy()
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lows", lo)
        object.__setattr__(self, "highs", hi)

    @classmethod
    def interval(cls, lo: float, hi: float) -> "BoxSet":
        return cls(np.array([lo]), np.array([hi]))

    @classmethod
    def singleton(cls, values) -> "BoxSet":
        v = np.atleast_1d(np.asarray(values, dtype=float))
        return cls(v, v)

    @property
    def dim(self) -> int:
        return self.lows.size

    def distances(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from each row of ``points`` to the box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"points have dimension {pts.shape[1]}, box has {self.dim}"
            )
        below = np.maximum(self.lows - pts, 0.0)
        above = np.maximum(pts - self.highs, 0.0)
        return np.sqrt(np.sum((below + above) ** 2, axis=1))


def _tail(sig: Signal, tail_fraction: float) -> np.ndarray:
    if not (0.0 < tail_fraction <= 1.0):
        raise DomainError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    count = int(math.ceil(tail_fraction * sig.n_samples))
    if count < 2:
        raise InsufficientDataError(
            f"tail of {count} sample(s) is too short; need at least 2"
        )
    return sig.samples[sig.n_samples - count :]


def _point_set_diameter(points: np.ndarray) -> float:
    if points.shape[1] == 1:
        col = points[:, 0]
        return float(col.max() - col.min())
    if points.shape[0] > _MAX_PAIRWISE_POINTS:
        stride = int(math.ceil(points.shape[0] / _MAX_PAIRWISE_POINTS))
        points = points[::stride]
    sq = np.sum(points**2, axis=1)
    best = 0.0
    block = 512
    for start in range(0, points.shape[0], block):
        chunk = points[start : start + block]
        d2 = sq[start : start + block, None] + sq[None, :] - 2.0 * (chunk @ points.T)
        best = max(best, float(d2.max()))
    return math.sqrt(max(best, 0.0))


def asymptotic_amplitude(sig: Signal, tail_fraction: float = 0.5) -> float:
    """Largest distance between any two samples in the tail.

    This is the sampled surrogate of the limiting oscillation size of the
    signal: zero exactly when the tail has settled (the Cauchy property),
    twice the amplitude for a sustained oscillation.
    """
    return _point_set_diameter(_tail(sig, tail_fraction))


def omega_limit_diameter(sig: Signal, tail_fraction: float = 0.5) -> float:
    """Diameter of the tail sample set.

    For a bounded signal the accumulation set of its tail has exactly the
    diameter measured by :func:`asymptotic_amplitude`; on sampled data the
    two estimators coincide identically.
    """
    return _point_set_diameter(_tail(sig, tail_fraction))


def converges_to(
    sig: Signal, target: BoxSet, eps: float, tail_fraction: float = 0.5
) -> bool:
    """True iff every tail sample lies within ``eps`` of the target box."""
    if eps <= 0.0:
        raise DomainError(f"eps must be positive, got {eps}")
    if target.dim != sig.dim:
        raise DimensionMismatchError(
            f"signal has dimension {sig.dim}, target has {target.dim}"
        )
    tail = _tail(sig, tail_fraction)
    return bool(np.all(target.distances(tail) <= eps))


def limit_value(
    sig: Signal, eps: float, tail_fraction: float = 0.5
) -> np.ndarray | None:
    """Tail mean if the tail has settled to within ``eps``; otherwise None."""
    if eps <= 0.0:
        raise DomainError(f"eps must be positive, got {eps}")
    tail = _tail(sig, tail_fraction)
    if _point_set_diameter(tail) >= eps:
        return None
    return tail.mean(axis=0)


def diameter(box: BoxSet) -> float:
    """Euclidean diameter of a box: the norm of its per-coordinate widths."""
    return float(np.linalg.norm(box.highs - box.lows))
