"""Decrease verification, stage gains, and cascade gain composition."""
from __future__ import annotations

import numpy as np
import pytest

from smallgain import (
    CascadeSpec,
    Delay,
    DistanceToInterval,
    EquilibriumMap,
    History,
    Inhibition,
    Scale,
    Signal,
    SimConfig,
    cascade_gain,
    converges_to,
    simulate_open,
    stage_gain,
    verify_u_decrease,
)
from smallgain.decrease import CustomDecrease
from smallgain.errors import DomainError, ModelingError
from smallgain.signals import BoxSet

from stagegen import random_input_interval, random_stage


class TestVerifyDecrease:
    def test_centered_target_passes(self, unit_stage):
        report = verify_u_decrease(DistanceToInterval(0.5, 0.5), unit_stage, (1.0, 1.0))
        assert report.ok
        assert report.witness is None
        assert report.margin_found < 0.0

    def test_miscentered_target_fails_with_witness(self, unit_stage):
        report = verify_u_decrease(DistanceToInterval(0.9, 0.9), unit_stage, (1.0, 1.0))
        assert not report.ok
        w = report.witness
        assert w is not None
        # between the true resting point 0.5 and the bogus target the
        # state still climbs while the candidate demands descent
        assert 0.5 < w.x < 0.9
        assert w.directional_derivative > 0.0
        assert report.margin_found == w.directional_derivative

    def test_resting_set_target_passes(self, unit_stage):
        em = EquilibriumMap(unit_stage)
        target = DistanceToInterval(em.g_inv(1.6), em.g_inv(2.0))
        report = verify_u_decrease(target, unit_stage, (1.6, 2.0))
        assert report.ok and report.margin_found < 0.0

    def test_random_stages_pass_with_resting_target(self):
        rng = np.random.default_rng(101)
        for _ in range(15):
            stage = random_stage(rng)
            c, d = random_input_interval(rng, stage)
            em = EquilibriumMap(stage)
            target = DistanceToInterval(em.g_inv(c), em.g_inv(d))
            report = verify_u_decrease(target, stage, (c, d))
            assert report.ok, (stage, c, d)
            assert report.margin_found < 0.0

    def test_whole_interval_target_is_vacuous(self, unit_stage):
        a, b = unit_stage.interval
        report = verify_u_decrease(DistanceToInterval(a, b), unit_stage, (1.0, 1.0))
        assert report.ok and report.vacuous

    def test_custom_without_gradient_uses_differences(self, unit_stage):
        custom = CustomDecrease(value_fn=lambda x: np.abs(np.asarray(x) - 0.5))
        report = verify_u_decrease(custom, unit_stage, (1.0, 1.0))
        assert report.ok and report.margin_found < 0.0

    def test_input_interval_ordering(self, unit_stage):
        with pytest.raises(DomainError):
            verify_u_decrease(DistanceToInterval(0.5, 0.5), unit_stage, (2.0, 1.0))


class TestStageGain:
    def test_wide_interval(self, unit_stage):
        sg = stage_gain(unit_stage, (0.0, 10.0))
        assert abs(sg.gain.slope - 1.0) < 1e-3
        assert abs(sg.z_set[0] - 0.0) < 1e-9
        assert abs(sg.z_set[1] - 10.0 / 11.0) < 1e-9

    def test_narrow_interval(self, unit_stage):
        sg = stage_gain(unit_stage, (1.6, 2.0))
        assert abs(sg.gain.slope - 1.0 / 2.6**2) < 1e-3
        assert abs(sg.z_set[0] - 0.61538461538) < 1e-3
        assert abs(sg.z_set[1] - 0.66666666667) < 1e-3

    def test_singleton_interval(self, unit_stage):
        sg = stage_gain(unit_stage, (1.0, 1.0))
        assert sg.z_set[0] == sg.z_set[1]
        assert abs(sg.z_set[0] - 0.5) < 1e-9

    def test_resting_set_bounded_by_gain(self):
        rng = np.random.default_rng(73)
        for _ in range(15):
            stage = random_stage(rng)
            c, d = random_input_interval(rng, stage)
            sg = stage_gain(stage, (c, d))
            assert sg.z_set[1] - sg.z_set[0] <= sg.gain.slope * (d - c) + 1e-9

    def test_negative_interval_rejected(self, unit_stage):
        with pytest.raises(DomainError):
            stage_gain(unit_stage, (-1.0, 1.0))


class TestCascadeGain:
    def test_single_stage_matches_stage_gain(self, unit_stage):
        cascade = CascadeSpec((unit_stage,))
        cg = cascade_gain(cascade, (0.0, 10.0), "global")
        sg = stage_gain(unit_stage, (0.0, 10.0))
        assert cg.gain.slope == sg.gain.slope
        assert cg.per_stage[0].z_set == sg.z_set

    def test_two_stage_global(self, unit_stage):
        cascade = CascadeSpec((unit_stage, unit_stage))
        cg = cascade_gain(cascade, (0.0, 10.0), "global")
        # second stage sees the full state interval [0, 1] of the first
        assert cg.per_stage[1].input_interval == (0.0, 1.0)
        assert abs(cg.gain.slope - 1.0) < 2e-3

    def test_two_stage_relative_chain(self, unit_stage):
        cascade = CascadeSpec((unit_stage, unit_stage))
        cg = cascade_gain(cascade, (1.6, 2.0), "relative")
        # derivative-chain oracle: 1/(1+u)^2 at the left endpoints
        lam1 = 1.0 / 2.6**2
        u1_lo = 1.6 / 2.6
        lam2 = 1.0 / (1.0 + u1_lo) ** 2
        assert abs(cg.per_stage[0].lam - lam1) < 1e-3
        assert abs(cg.per_stage[1].lam - lam2) < 1e-3
        assert abs(cg.gain.slope - lam1 * lam2) < 5e-4
        lo, hi = cg.per_stage[1].input_interval
        assert abs(lo - 0.6153846) < 1e-3 and abs(hi - 0.6666667) < 1e-3

    def test_relative_never_exceeds_global(self, unit_stage):
        cascade = CascadeSpec((unit_stage, Delay(0.5), unit_stage))
        for u0 in [(1.6, 2.0), (0.5, 1.0), (0.0, 2.0)]:
            rel = cascade_gain(cascade, u0, "relative").gain.slope
            glob = cascade_gain(cascade, u0, "global").gain.slope
            assert rel <= glob + 1e-12

    def test_delays_contribute_unit_factor(self, unit_stage):
        plain = CascadeSpec((unit_stage, unit_stage))
        delayed = CascadeSpec((unit_stage, Delay(1.25), unit_stage))
        for mode in ("global", "relative"):
            assert (
                cascade_gain(plain, (1.0, 2.0), mode).gain.slope
                == cascade_gain(delayed, (1.0, 2.0), mode).gain.slope
            )

    def test_memoryless_factor_included(self, unit_stage):
        cascade = CascadeSpec((unit_stage, Scale(0.5), unit_stage))
        cg = cascade_gain(cascade, (1.0, 2.0), "relative")
        kinds = [p.kind for p in cg.per_stage]
        assert kinds == ["ode", "memoryless", "ode"]
        product = np.prod([p.lam for p in cg.per_stage])
        assert cg.gain.slope == pytest.approx(product)

    def test_escaping_interval_reports_stage(self, unit_stage):
        cascade = CascadeSpec((unit_stage, Scale(-1.0), unit_stage))
        with pytest.raises(ModelingError) as err:
            cascade_gain(cascade, (1.0, 2.0), "relative")
        assert err.value.stage_index == 2

    def test_inhibition_interval_requires_nonnegative(self, unit_stage):
        cascade = CascadeSpec((Inhibition(2.0, 1.0), unit_stage))
        with pytest.raises(ModelingError) as err:
            cascade_gain(cascade, (-0.5, 1.0), "relative")
        assert err.value.stage_index == 0


class TestTailEntersRestingSet:
    def test_trajectory_tail_enters_resting_set(self):
        # inputs oscillating inside U drive the state into the resting set
        rng = np.random.default_rng(404)
        cfg = SimConfig(dt=0.01, horizon=80.0)
        for _ in range(5):
            stage = random_stage(rng)
            c, d = random_input_interval(rng, stage)
            sg = stage_gain(stage, (c, d))
            mid, half = 0.5 * (c + d), 0.5 * (d - c)
            ts = np.arange(0.0, cfg.horizon + cfg.dt / 2, cfg.dt)
            drive = mid + half * 0.9 * np.sin(0.7 * ts)
            traj = simulate_open(
                CascadeSpec((stage,)),
                Signal(0.0, cfg.dt, drive),
                History.constant([stage.interval[0]]),
                cfg,
            )
            assert converges_to(
                traj.states[0],
                BoxSet.interval(*sg.z_set),
                eps=1e-3,
                tail_fraction=0.25,
            )
