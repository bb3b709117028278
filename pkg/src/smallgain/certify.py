"""Certificate assembly, empirical validation, and gain spot checks.

A certificate for a feedback-closed cascade records the composed forward
gain, the feedback gain, and the outcome of the loop contraction test.
Both gains produced by this toolkit are linear, so the amplitude
contraction condition and the limit-uniqueness condition collapse to one
slope-product test; the certificate states that reduction explicitly.
When the test passes, the unique closed-loop resting point is solved
from the stage equilibrium maps and recorded, and
:func:`validate_certificate` cross-checks it against an ensemble of
independent simulations.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .behaviors import (
    Affine,
    CascadeSpec,
    Delay,
    EquilibriumMap,
    Hill,
    Identity,
    Inhibition,
    MemorylessMap,
    Scale,
    ScalarMonotoneOde,
    Table,
    TableLookup,
)
from .decrease import (
    DistanceToInterval,
    PerStageGain,
    cascade_gain,
    verify_u_decrease,
)
from .errors import ConfigError
from .gains import ContractionVerdict, GainFunction, GridSpec, Linear, is_contraction
from .signals import Signal, asymptotic_amplitude, limit_value
from .simulate import SimConfig, _parse_chain, ensemble, integrate_stage_ensemble

__all__ = [
    "Certificate",
    "ValidationReport",
    "GainCheckReport",
    "certify",
    "validate_certificate",
    "empirical_gain_check",
    "cascade_digest",
]

_FIXED_POINT_TOL = 1e-12


# ---------------------------------------------------------------------------
# Canonical cascade description (for digests and JSON emission)


def _fn_dict(fn) -> dict:
    if isinstance(fn, Affine):
        return {"affine": {"offset": fn.offset, "slope": fn.slope}}
    if isinstance(fn, Hill):
        return {
            "hill": {
                "scale": fn.scale,
                "threshold": fn.threshold,
                "exponent": fn.exponent,
                "root": fn.root,
                "direction": fn.direction,
            }
        }
    if isinstance(fn, Table):
        return {"table": {"x": list(fn.xs), "y": list(fn.ys)}}
    return {"opaque": repr(fn)}


def _map_dict(m: MemorylessMap) -> dict:
    if isinstance(m, Identity):
        return {"identity": {}}
    if isinstance(m, Scale):
        return {"scale": m.factor}
    if isinstance(m, Inhibition):
        return {"inhibition": {"mu": m.mu, "k": m.k}}
    if isinstance(m, TableLookup):
        return {"table": {"x": list(m.table.xs), "y": list(m.table.ys)}}
    return {"opaque": repr(m)}


def cascade_to_dict(cascade: CascadeSpec) -> dict:
    stages = []
    for st in cascade.stages:
        if isinstance(st, Delay):
            stages.append({"kind": "delay", "tau": st.tau})
        elif isinstance(st, MemorylessMap):
            stages.append({"kind": "memoryless", "map": _map_dict(st)})
        else:
            stages.append(
                {
                    "kind": "ode",
                    "interval": list(st.interval),
                    "alpha": _fn_dict(st.alpha),
                    "beta": _fn_dict(st.beta),
                }
            )
    doc: dict = {"stages": stages}
    if cascade.feedback is not None:
        fb = cascade.feedback
        doc["feedback"] = {"mu": fb.mu, "k": fb.k, "tau": fb.tau}
    return doc


def cascade_digest(cascade: CascadeSpec) -> str:
    blob = json.dumps(cascade_to_dict(cascade), sort_keys=True).encode()
    return "sha256:" + hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# Certificate


@dataclass(frozen=True)
class Certificate:
    """Small-gain verdict for one feedback-closed cascade."""

    mode: str
    per_stage: tuple[PerStageGain, ...]
    forward_gain: Linear
    feedback_gain: Linear
    loop_factor: float
    contraction: ContractionVerdict
    k_max: float | None
    predicted_limits: tuple[float, ...] | None
    predicted_input_limit: float | None
    config_digest: str
    tool_version: str

    def to_json_dict(self) -> dict:
        doc = {
            "tool": {"name": "smallgain", "version": self.tool_version},
            "config_digest": self.config_digest,
            "mode": self.mode,
            "forward_gain": {"linear": self.forward_gain.slope},
            "feedback_gain": {"linear": self.feedback_gain.slope},
            "loop_factor": self.loop_factor,
            "per_stage": [
                {
                    "stage_index": p.stage_index,
                    "kind": p.kind,
                    "input_interval": list(p.input_interval),
                    "lipschitz": p.lam,
                    "z_set": list(p.z_set) if p.z_set is not None else None,
                    "decrease_ok": p.decrease_ok,
                    "decrease_margin": (
                        p.decrease_margin
                        if p.decrease_margin is not None and math.isfinite(p.decrease_margin)
                        else None
                    ),
                }
                for p in self.per_stage
            ],
            "contraction": {
                "holds": self.contraction.holds,
                "witness": self.contraction.witness,
            },
            "k_max": self.k_max,
            "predicted_limits": (
                list(self.predicted_limits) if self.predicted_limits is not None else None
            ),
            "predicted_input_limit": self.predicted_input_limit,
            "conditions": {
                "contraction": (
                    "forward gain followed by feedback gain must stay strictly below "
                    "the identity at every positive radius; both gains are linear, so "
                    "the test reduces to loop_factor < 1, decided exactly"
                ),
                "uniqueness": (
                    "with linear gains the amplitude test and the limit-discrepancy "
                    "test coincide, so a passing certificate also forces every "
                    "closed-loop trajectory to settle at one shared limit"
                ),
                "boundedness": (
                    "every dynamic state is confined to a compact interval, so "
                    "closed-loop signals are ultimately bounded by construction"
                ),
                "gain_scope": (
                    "per-stage gains are verified on the finitely many input "
                    "intervals listed in per_stage, not on every compact input set"
                ),
                "interval_propagation": (
                    "relative mode feeds each stage's resting set forward as the "
                    "next stage's input interval; delays pass intervals unchanged "
                    "and decreasing maps reverse interval endpoints"
                ),
                "existence": (
                    "closed-loop trajectories are constructed by simulation; the "
                    "certificate does not assume the closed loop is nonempty"
                ),
            },
        }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def _feedback_input_range(cascade: CascadeSpec) -> tuple[float, float]:
    """Range of the drive fed to the first stage once the loop has settled
    into the state intervals: the feedback map's image of the (trailing-map
    adjusted) final state interval."""
    fb = cascade.feedback
    _, odes, tail, _ = _parse_chain(cascade)
    interval = odes[-1].interval
    for m in tail.maps:
        interval = m.map_interval(interval)
    lo = fb.mu / (1.0 + fb.k * interval[1])
    hi = fb.mu / (1.0 + fb.k * interval[0])
    return (lo, hi)


def _predict_limits(cascade: CascadeSpec) -> tuple[tuple[float, ...], float]:
    """Unique closed-loop resting point, by bisection on the loop chain.

    Assume the final state settles at x: the feedback turns it into a
    drive, each stage hands its resting state forward, and the chain
    returns a new final state.  The chain is nonincreasing in x while
    each stage map is increasing, so the displaced value crosses x
    exactly once on the final stage's interval.
    """
    fb = cascade.feedback
    segments, odes, tail, _ = _parse_chain(cascade)
    ems = [EquilibriumMap(o) for o in odes]

    def chain(x: float) -> tuple[list[float], float]:
        v = x
        for m in tail.maps:
            v = float(m(v))
        omega = fb.mu / (1.0 + fb.k * v)
        vals: list[float] = []
        v = omega
        for seg, em in zip(segments, ems):
            for m in seg.maps:
                v = float(m(v))
            v = em.g_inv(v)
            vals.append(v)
        return vals, omega

    a, b = odes[-1].interval
    lo, hi = a, b
    iters = max(8, int(math.ceil(math.log2(max((b - a) / _FIXED_POINT_TOL, 2.0)))) + 2)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        vals, _ = chain(mid)
        if vals[-1] - mid > 0.0:
            lo = mid
        else:
            hi = mid
    x_bar = 0.5 * (lo + hi)
    vals, omega = chain(x_bar)
    return tuple(vals), omega


def certify(
    cascade: CascadeSpec,
    mode: str = "global",
    grid: GridSpec | None = None,
    margin: float = 1e-6,
    n_grid: int = 10001,
    config_digest: str | None = None,
) -> Certificate:
    """Build the small-gain certificate for a feedback-closed cascade.

    Global mode composes stage gains over full admissible input ranges,
    starting from [0, mu], and reports the feedback-strength bound
    k_max = 1 / (mu * forward slope).  Relative mode starts from the
    feedback map's actual output range, which shrinks every interval in
    the chain and certifies a wider range of feedback strengths; its
    forward gain depends on k, so no closed-form k_max is reported.
    """
    fb = cascade.feedback
    if fb is None:
        raise ConfigError("certification needs a feedback-closed cascade")
    if mode not in ("global", "relative"):
        raise ConfigError(f"mode must be 'global' or 'relative', got {mode!r}")
    if config_digest is None:
        config_digest = cascade_digest(cascade)
    full_u0 = (0.0, fb.mu)
    u0 = _feedback_input_range(cascade) if mode == "relative" else full_u0
    cg = cascade_gain(cascade, u0, mode, n_grid, full_U0=full_u0)
    per_stage = []
    for row in cg.per_stage:
        if row.kind == "ode":
            stage = cascade.stages[row.stage_index]
            check = verify_u_decrease(
                DistanceToInterval(*row.z_set), stage, row.input_interval
            )
            row = replace(row, decrease_ok=check.ok, decrease_margin=check.margin_found)
        per_stage.append(row)
    per_stage = tuple(per_stage)
    forward = cg.gain
    feedback_gain = Linear(fb.k * fb.mu)
    verdict = is_contraction(forward, feedback_gain, grid, margin)
    k_max = None
    if mode == "global" and forward.slope > 0.0:
        k_max = 1.0 / (fb.mu * forward.slope)
    predicted: tuple[float, ...] | None = None
    omega_bar: float | None = None
    if verdict.holds:
        predicted, omega_bar = _predict_limits(cascade)
    return Certificate(
        mode=mode,
        per_stage=per_stage,
        forward_gain=forward,
        feedback_gain=feedback_gain,
        loop_factor=forward.slope * feedback_gain.slope,
        contraction=verdict,
        k_max=k_max,
        predicted_limits=predicted,
        predicted_input_limit=omega_bar,
        config_digest=config_digest,
        tool_version=__version__,
    )


# ---------------------------------------------------------------------------
# Empirical validation


@dataclass(frozen=True)
class ValidationReport:
    """Ensemble cross-check of a passing certificate.

    ``per_run_limits[r][i]`` is the settled value of dynamic stage i in
    run r, or None if that state never settled within the tolerance (an
    implementation alarm, not a statement about the theory)."""

    all_converged: bool
    max_limit_spread: float
    per_run_limits: tuple[tuple[float | None, ...], ...]
    failed_runs: tuple[int, ...]
    max_prediction_error: float | None

    def to_json_dict(self) -> dict:
        return {
            "all_converged": self.all_converged,
            "max_limit_spread": self.max_limit_spread,
            "failed_runs": list(self.failed_runs),
            "max_prediction_error": self.max_prediction_error,
            "per_run_limits": [list(row) for row in self.per_run_limits],
        }


def validate_certificate(
    cert: Certificate,
    cascade: CascadeSpec,
    config: SimConfig,
    n_runs: int,
    tol: float,
) -> ValidationReport:
    """Run a seeded ensemble and check that every state settles to one
    shared limit matching the certificate's prediction."""
    if not cert.contraction.holds:
        raise ConfigError("validation requires a certificate whose contraction holds")
    runs = ensemble(cascade, config, n_runs)
    per_run: list[tuple[float | None, ...]] = []
    failed: list[int] = []
    for idx, traj in enumerate(runs):
        lims: list[float | None] = []
        for sig in traj.states:
            val = limit_value(sig, eps=tol, tail_fraction=0.5)
            lims.append(float(val[0]) if val is not None else None)
        per_run.append(tuple(lims))
        if any(v is None for v in lims):
            failed.append(idx)
    n_states = len(runs[0].states)
    spread = 0.0
    for i in range(n_states):
        vals = [row[i] for row in per_run if row[i] is not None]
        if len(vals) >= 2:
            spread = max(spread, max(vals) - min(vals))
    pred_err: float | None = None
    if cert.predicted_limits is not None:
        errs = [
            abs(row[i] - cert.predicted_limits[i])
            for row in per_run
            for i in range(n_states)
            if row[i] is not None
        ]
        pred_err = max(errs) if errs else None
    return ValidationReport(
        all_converged=not failed,
        max_limit_spread=spread,
        per_run_limits=tuple(per_run),
        failed_runs=tuple(failed),
        max_prediction_error=pred_err,
    )


# ---------------------------------------------------------------------------
# Gain spot checks


@dataclass(frozen=True)
class GainCheckReport:
    """Worst slack found when testing a claimed gain against simulations.

    Violations measure (observed output quantity) minus (claimed gain of
    the input quantity); anything significantly positive falsifies the
    claimed gain at estimator accuracy."""

    max_violation: float
    worst_input_id: str
    amplitude_max_violation: float
    incremental_max_violation: float


def _oscillatory_batch(rng, lo, hi, n_inputs, max_components=4):
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    amps = np.zeros((n_inputs, max_components))
    freqs = np.ones((n_inputs, max_components))
    phases = np.zeros((n_inputs, max_components))
    for r in range(n_inputs):
        nc = int(rng.integers(1, max_components + 1))
        raw = rng.uniform(0.2, 1.0, nc)
        total = half * rng.uniform(0.2, 0.95)
        amps[r, :nc] = raw / raw.sum() * total
        freqs[r, :nc] = rng.uniform(0.1, 1.2, nc)
        phases[r, :nc] = rng.uniform(0.0, 2.0 * math.pi, nc)

    def input_fn(t: float) -> np.ndarray:
        return center + (amps * np.sin(freqs * t + phases)).sum(axis=1)

    return input_fn


def empirical_gain_check(
    stage: ScalarMonotoneOde,
    claimed: GainFunction,
    n_inputs: int,
    input_range: tuple[float, float],
    config: SimConfig,
    seed: int,
    n_pairs: int | None = None,
    limit_eps: float = 1e-3,
) -> GainCheckReport:
    """Stress a claimed stage gain with seeded input ensembles.

    Two families are generated inside ``input_range``: sums of sinusoids
    (bounded oscillations, testing that the output oscillation size stays
    below the claimed gain of the input oscillation size) and pairs of
    inputs settling to distinct constants (testing that the output limits
    differ by at most the claimed gain of the input limit gap).  Both
    quantities are measured with the tail estimators, so small positive
    violations up to estimator slack are expected noise.
    """
    if n_inputs < 2:
        raise ConfigError(f"n_inputs must be >= 2, got {n_inputs}")
    lo, hi = (float(input_range[0]), float(input_range[1]))
    if not (0.0 <= lo < hi):
        raise ConfigError(f"input_range must satisfy 0 <= lo < hi, got [{lo}, {hi}]")
    if n_pairs is None:
        n_pairs = max(1, n_inputs // 2)
    rng = np.random.default_rng(seed)
    a, b = stage.interval
    dt = config.dt

    # Oscillatory family: amplitude inequality.
    input_fn = _oscillatory_batch(rng, lo, hi, n_inputs)
    x0 = rng.uniform(a, b, n_inputs)
    ts = dt * np.arange(config.n_steps + 1)
    u_grid = np.stack([input_fn(t) for t in ts])
    if u_grid.min() < lo - 1e-12 or u_grid.max() > hi + 1e-12:
        raise RuntimeError("input generator escaped the admissible range")
    X = integrate_stage_ensemble(stage, input_fn, x0, config)
    worst = -math.inf
    worst_id = "oscillatory-0"
    amp_worst = -math.inf
    for r in range(n_inputs):
        amp_in = asymptotic_amplitude(Signal(0.0, dt, u_grid[:, r]), 0.5)
        amp_out = asymptotic_amplitude(Signal(0.0, dt, X[:, r]), 0.5)
        violation = amp_out - claimed(amp_in)
        amp_worst = max(amp_worst, violation)
        if violation > worst:
            worst = violation
            worst_id = f"oscillatory-{r}"

    # Convergent pairs: limit-discrepancy inequality.
    targets = rng.uniform(lo, hi, (n_pairs, 2))
    starts = rng.uniform(lo, hi, (n_pairs, 2))
    taus = rng.uniform(1.0, 5.0, (n_pairs, 2))
    x0p = rng.uniform(a, b, 2 * n_pairs)
    c = targets.reshape(-1)
    s = starts.reshape(-1)
    tau = taus.reshape(-1)

    def pair_fn(t: float) -> np.ndarray:
        return c + (s - c) * np.exp(-t / tau)

    Xp = integrate_stage_ensemble(stage, pair_fn, x0p, config)
    inc_worst = -math.inf
    for j in range(n_pairs):
        l1 = limit_value(Signal(0.0, dt, Xp[:, 2 * j]), eps=limit_eps, tail_fraction=0.25)
        l2 = limit_value(Signal(0.0, dt, Xp[:, 2 * j + 1]), eps=limit_eps, tail_fraction=0.25)
        if l1 is None or l2 is None:
            violation = math.inf
        else:
            violation = abs(float(l1[0]) - float(l2[0])) - claimed(
                abs(targets[j, 0] - targets[j, 1])
            )
        inc_worst = max(inc_worst, violation)
        if violation > worst:
            worst = violation
            worst_id = f"pair-{j}"
    return GainCheckReport(
        max_violation=worst,
        worst_input_id=worst_id,
        amplitude_max_violation=amp_worst,
        incremental_max_violation=inc_worst,
    )
