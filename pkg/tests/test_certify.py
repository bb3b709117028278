"""Certificates: assembly, determinism, monotonicity, empirical validation."""
from __future__ import annotations

import json

import numpy as np
import pytest

from smallgain import (
    CascadeSpec,
    Feedback,
    Linear,
    SimConfig,
    certify,
    empirical_gain_check,
    validate_certificate,
)
from smallgain.certify import cascade_digest
from smallgain.errors import ConfigError
from smallgain.simulate import integrate_stage_ensemble
from smallgain.signals import Signal, asymptotic_amplitude, limit_value

from conftest import make_flagship_cascade
from stagegen import bisect_equilibrium


def flagship_fixed_point(k: float, mu: float = 2.0) -> tuple[float, float]:
    """Independent oracle for the two-stage loop: solve x2 = G(x2) with
    plain bisection on hand-written formulas."""

    def chain(x2: float) -> tuple[float, float]:
        omega = mu / (1.0 + k * x2)
        x1 = omega / (1.0 + omega)
        return x1, x1 / (1.0 + x1)

    lo, hi = 0.0, 1.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if chain(mid)[1] - mid > 0:
            lo = mid
        else:
            hi = mid
    x2 = 0.5 * (lo + hi)
    return chain(x2)


class TestCertify:
    def test_flagship_global(self, flagship):
        cert = certify(flagship, "global")
        lams = [p.lam for p in cert.per_stage if p.kind == "ode"]
        assert len(lams) == 2
        for lam in lams:
            assert abs(lam - 1.0) < 1e-3
        assert abs(cert.k_max - 0.5) < 1e-3
        assert cert.contraction.holds  # k mu prod(lam) ~ 0.5 < 1
        assert cert.feedback_gain == Linear(0.25 * 2.0)
        assert cert.predicted_limits is not None

    def test_flagship_relative(self, flagship):
        cert = certify(flagship, "relative")
        assert cert.contraction.holds
        assert cert.loop_factor < 0.05
        assert cert.k_max is None
        # first stage sees the feedback image [mu/(1+k), mu]
        first_ode = next(p for p in cert.per_stage if p.kind == "ode")
        assert first_ode.input_interval == pytest.approx((1.6, 2.0))

    def test_zero_feedback(self, unit_stage):
        cascade = CascadeSpec((unit_stage, unit_stage), Feedback(mu=2.0, k=0.0, tau=0.0))
        cert = certify(cascade, "global")
        assert cert.feedback_gain.is_zero_gain
        assert cert.contraction.holds
        x1 = bisect_equilibrium(unit_stage, 2.0)
        x2 = bisect_equilibrium(unit_stage, x1)
        assert cert.predicted_limits == pytest.approx((x1, x2), abs=1e-9)
        assert cert.predicted_input_limit == pytest.approx(2.0)

    def test_failing_certificate_carries_witness(self):
        cert = certify(make_flagship_cascade(k=0.75), "global")
        assert not cert.contraction.holds
        assert cert.contraction.witness is not None
        assert cert.predicted_limits is None

    def test_predicted_limits_match_oracle(self, flagship):
        cert = certify(flagship, "global")
        oracle = flagship_fixed_point(0.25)
        assert cert.predicted_limits == pytest.approx(oracle, abs=1e-10)

    def test_deterministic_serialization(self, flagship):
        a = certify(flagship, "global").to_json()
        b = certify(flagship, "global").to_json()
        assert a == b
        doc = json.loads(a)
        assert doc["tool"]["name"] == "smallgain"
        assert doc["mode"] == "global"
        assert doc["contraction"]["holds"] is True

    def test_certificate_carries_decrease_evidence(self, flagship):
        cert = certify(flagship, "relative")
        ode_rows = [p for p in cert.per_stage if p.kind == "ode"]
        assert all(p.decrease_ok for p in ode_rows)
        assert all(p.decrease_margin < 0.0 for p in ode_rows)
        doc = cert.to_json_dict()
        for row in doc["per_stage"]:
            if row["kind"] == "ode":
                assert row["decrease_ok"] is True
                assert row["decrease_margin"] < 0.0

    def test_digest_depends_on_cascade(self, flagship):
        other = make_flagship_cascade(k=0.3)
        assert cascade_digest(flagship) != cascade_digest(other)
        assert certify(flagship).config_digest == cascade_digest(flagship)

    def test_monotone_in_feedback_strength(self):
        for mode in ("global", "relative"):
            held = [
                certify(make_flagship_cascade(k=k), mode).contraction.holds
                for k in np.linspace(0.0, 1.2, 13)
            ]
            # once it fails it stays failed
            assert held == sorted(held, reverse=True)

    def test_relative_holds_wherever_global_does(self):
        for k in np.linspace(0.0, 1.2, 13):
            cascade = make_flagship_cascade(k=float(k))
            g = certify(cascade, "global")
            r = certify(cascade, "relative")
            if g.contraction.holds:
                assert r.contraction.holds
            assert r.loop_factor <= g.loop_factor + 1e-15

    def test_relative_strictly_wider_range(self):
        cascade = make_flagship_cascade(k=0.6)
        assert not certify(cascade, "global").contraction.holds
        assert certify(cascade, "relative").contraction.holds

    def test_feedback_required(self, unit_stage):
        with pytest.raises(ConfigError):
            certify(CascadeSpec((unit_stage,)))


class TestValidation:
    def test_flagship_validation(self, flagship):
        cert = certify(flagship, "global")
        cfg = SimConfig(dt=0.01, horizon=150.0, seed=21)
        report = validate_certificate(cert, flagship, cfg, n_runs=4, tol=1e-5)
        assert report.all_converged
        assert report.failed_runs == ()
        assert report.max_limit_spread < 2e-5
        assert report.max_prediction_error < 1e-5
        oracle = flagship_fixed_point(0.25)
        for row in report.per_run_limits:
            assert row == pytest.approx(oracle, abs=1e-5)

    def test_zero_feedback_validation(self, unit_stage):
        cascade = CascadeSpec((unit_stage, unit_stage), Feedback(mu=2.0, k=0.0, tau=0.0))
        cert = certify(cascade, "global")
        report = validate_certificate(
            cert, cascade, SimConfig(dt=0.01, horizon=100.0, seed=2), n_runs=3, tol=1e-6
        )
        assert report.all_converged
        assert report.max_limit_spread < 1e-9

    def test_requires_passing_certificate(self):
        cascade = make_flagship_cascade(k=0.75)
        cert = certify(cascade, "global")
        with pytest.raises(ConfigError):
            validate_certificate(cert, cascade, SimConfig(dt=0.01, horizon=10.0), 2, 1e-5)

    def test_unsettled_run_is_reported_not_raised(self, flagship):
        cert = certify(flagship, "global")
        # a horizon too short to settle within 1e-9 forces a 'none' limit
        cfg = SimConfig(dt=0.01, horizon=5.0, seed=1)
        report = validate_certificate(cert, flagship, cfg, n_runs=2, tol=1e-9)
        assert not report.all_converged
        assert report.failed_runs != ()


class TestGainCheck:
    def test_flagship_stage_obeys_unit_gain(self, unit_stage):
        report = empirical_gain_check(
            unit_stage,
            Linear(1.0),
            n_inputs=20,
            input_range=(0.0, 2.0),
            config=SimConfig(dt=0.01, horizon=400.0),
            seed=12,
        )
        assert report.amplitude_max_violation <= 0.02
        assert report.incremental_max_violation <= 2e-4

    def test_understated_gain_is_falsified(self, unit_stage):
        # claiming a 0.05 slope must be contradicted by slow oscillations
        report = empirical_gain_check(
            unit_stage,
            Linear(0.05),
            n_inputs=20,
            input_range=(0.0, 2.0),
            config=SimConfig(dt=0.01, horizon=400.0),
            seed=12,
        )
        assert report.max_violation > 0.0

    def test_constant_input_has_zero_violation(self, unit_stage):
        cfg = SimConfig(dt=0.01, horizon=60.0)
        X = integrate_stage_ensemble(
            unit_stage, lambda t: np.array([1.0]), np.array([0.5]), cfg
        )
        out = Signal(0.0, cfg.dt, X[:, 0])
        # resting start + constant drive: both amplitudes are exactly zero
        assert asymptotic_amplitude(out, 0.5) == 0.0

    def test_pair_with_equal_targets(self, unit_stage):
        cfg = SimConfig(dt=0.01, horizon=60.0)
        c = 1.3
        fn = lambda t: np.array([c + (0.2 - c) * np.exp(-t), c + (1.9 - c) * np.exp(-t / 2)])
        X = integrate_stage_ensemble(unit_stage, fn, np.array([0.1, 0.9]), cfg)
        eps = 1e-3
        l1 = limit_value(Signal(0.0, cfg.dt, X[:, 0]), eps=eps, tail_fraction=0.25)
        l2 = limit_value(Signal(0.0, cfg.dt, X[:, 1]), eps=eps, tail_fraction=0.25)
        assert l1 is not None and l2 is not None
        assert abs(l1[0] - l2[0]) < 2 * eps

    def test_generator_stays_in_range(self, unit_stage):
        # would raise if any sampled drive left the admissible range
        empirical_gain_check(
            unit_stage,
            Linear(1.0),
            n_inputs=10,
            input_range=(0.2, 1.4),
            config=SimConfig(dt=0.01, horizon=120.0),
            seed=77,
        )

    def test_input_range_validation(self, unit_stage):
        with pytest.raises(ConfigError):
            empirical_gain_check(
                unit_stage, Linear(1.0), 10, (-1.0, 1.0), SimConfig(dt=0.01, horizon=50.0), 0
            )
