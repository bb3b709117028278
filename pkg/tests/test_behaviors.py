"""Stage primitives: delays, pointwise maps, stage validation, equilibrium maps."""
from __future__ import annotations

import numpy as np
import pytest

from smallgain import (
    Affine,
    CascadeSpec,
    Delay,
    EquilibriumMap,
    Feedback,
    Hill,
    Identity,
    Inhibition,
    Scale,
    ScalarMonotoneOde,
    Signal,
    Table,
    TableLookup,
    apply_delay,
    apply_memoryless,
    lipschitz_estimate,
)
from smallgain.errors import ConfigError, DomainError, InvalidStageError

from stagegen import random_stage


def step_signal(step_time: float, horizon: float, dt: float) -> Signal:
    ts = np.arange(0.0, horizon + dt / 2, dt)
    return Signal(0.0, dt, (ts >= step_time).astype(float))


class TestFunctionSpecs:
    def test_affine(self):
        f = Affine(1.0, -2.0)
        assert f(0.5) == 0.0
        np.testing.assert_allclose(f(np.array([0.0, 1.0])), [1.0, -1.0])

    def test_hill_up_and_down(self):
        up = Hill(scale=2.0, threshold=1.0, exponent=2.0, root=0.5, direction="up")
        assert up(0.5) == 0.0
        assert up(1.5) == 2.0 * 1.0 / (1.0 + 1.0)
        down = Hill(scale=1.0, threshold=0.5, exponent=1.0, root=1.0, direction="down")
        assert down(1.0) == 0.0
        assert down(0.5) == 0.5 / (0.5 + 0.5)

    def test_hill_validation(self):
        with pytest.raises(ConfigError):
            Hill(scale=0.0, threshold=1.0, exponent=1.0)
        with pytest.raises(ConfigError):
            Hill(scale=1.0, threshold=1.0, exponent=1.0, direction="sideways")

    def test_table(self):
        t = Table((0.0, 1.0, 2.0), (0.0, 1.0, 4.0))
        assert t(1.5) == 2.5
        assert t(5.0) == 4.0  # clamped
        with pytest.raises(ConfigError):
            Table((0.0, 1.0), (1.0, 1.0))


class TestMemoryless:
    def test_identity_is_bit_exact(self):
        sig = Signal(0.0, 0.1, np.random.default_rng(0).normal(size=50))
        assert apply_memoryless(sig, Identity()) is sig

    def test_inhibition_constant_when_k_zero(self):
        sig = Signal(0.0, 0.1, np.linspace(0, 5, 40))
        out = apply_memoryless(sig, Inhibition(mu=2.0, k=0.0))
        assert np.all(out.samples == 2.0)

    def test_inhibition_halves_at_unit(self):
        sig = Signal(0.0, 0.1, np.full(20, 1.0))
        out = apply_memoryless(sig, Inhibition(mu=2.0, k=1.0))
        assert np.all(out.samples == 1.0)

    def test_inhibition_rejects_negative_input(self):
        sig = Signal(0.0, 0.1, np.array([-0.5, 1.0]))
        with pytest.raises(DomainError):
            apply_memoryless(sig, Inhibition(mu=1.0, k=1.0))

    def test_lipschitz_constants(self):
        assert Inhibition(2.0, 0.25).lipschitz() == 0.5
        assert Inhibition(2.0, 0.25).lipschitz((1.0, 2.0)) == pytest.approx(
            0.5 / 1.25**2
        )
        assert Scale(-3.0).lipschitz() == 3.0
        lut = TableLookup(Table((0.0, 1.0, 2.0), (0.0, 2.0, 3.0)))
        assert lut.lipschitz() == 2.0
        assert lut.lipschitz((1.0, 2.0)) == 1.0

    def test_interval_images(self):
        assert Inhibition(2.0, 1.0).map_interval((0.0, 1.0)) == (1.0, 2.0)
        assert Scale(-2.0).map_interval((1.0, 3.0)) == (-6.0, -2.0)


class TestDelay:
    def test_zero_delay_is_identity(self):
        sig = step_signal(1.0, 5.0, 0.1)
        assert apply_delay(sig, 0.0) is sig

    def test_step_shifts_by_tau(self):
        sig = step_signal(1.0, 5.0, 0.1)
        out = apply_delay(sig, 0.5, history=0.0)
        expected = step_signal(1.5, 5.0, 0.1)
        np.testing.assert_allclose(out.samples, expected.samples, atol=1e-12)

    def test_constant_with_matching_history(self):
        sig = Signal(0.0, 0.1, np.full(60, 2.5))
        out = apply_delay(sig, 0.73, history=2.5)
        assert np.all(out.samples == 2.5)

    def test_missing_history_rejected(self):
        sig = step_signal(1.0, 5.0, 0.1)
        with pytest.raises(ConfigError):
            apply_delay(sig, 0.5)

    def test_composition_matches_single_delay(self):
        ts = np.arange(0.0, 10.0, 0.05)
        sig = Signal(0.0, 0.05, np.sin(ts))
        hist = lambda t: np.sin(t)
        two = apply_delay(apply_delay(sig, 0.35, hist), 0.3, lambda t: np.sin(t - 0.35))
        one = apply_delay(sig, 0.65, hist)
        mask = ts >= 0.65
        # grid-aligned total delay: 0.65 = 13 steps, so values line up exactly
        # up to the two extra interpolations of the split path
        np.testing.assert_allclose(
            two.samples[mask], one.samples[mask], atol=0.05**2
        )

    def test_grid_aligned_composition_exact(self):
        rng = np.random.default_rng(4)
        sig = Signal(0.0, 0.1, rng.normal(size=100))
        hist = 0.0
        two = apply_delay(apply_delay(sig, 0.3, hist), 0.2, hist)
        one = apply_delay(sig, 0.5, hist)
        ts = sig.times()
        mask = ts >= 0.5
        np.testing.assert_array_equal(two.samples[mask], one.samples[mask])


class TestStageValidation:
    def test_flagship_stage_valid(self, unit_stage):
        assert unit_stage.interval == (0.0, 1.0)

    def test_alpha_root_enforced(self):
        with pytest.raises(InvalidStageError):
            ScalarMonotoneOde(Affine(0.5, 1.0), Affine(1.0, -1.0), (0.0, 1.0))

    def test_beta_root_enforced(self):
        with pytest.raises(InvalidStageError):
            ScalarMonotoneOde(Affine(0.0, 1.0), Affine(2.0, -1.0), (0.0, 1.0))

    def test_monotonicity_enforced(self):
        with pytest.raises(InvalidStageError):
            ScalarMonotoneOde(Affine(0.0, -1.0), Affine(1.0, -1.0), (-1.0, 1.0))

    def test_interval_ordering(self):
        with pytest.raises(InvalidStageError):
            ScalarMonotoneOde(Affine(0.0, 1.0), Affine(1.0, -1.0), (1.0, 0.0))

    def test_cascade_needs_dynamics(self):
        with pytest.raises(ConfigError):
            CascadeSpec((Delay(0.1),))

    def test_feedback_validation(self):
        with pytest.raises(ConfigError):
            Feedback(mu=0.0, k=0.1)
        with pytest.raises(ConfigError):
            Feedback(mu=1.0, k=-0.1)


class TestLipschitzEstimate:
    def test_affine_exact(self):
        assert lipschitz_estimate(Affine(0.0, 3.0), (-2.0, 5.0)) == pytest.approx(3.0)

    def test_equilibrium_inverse_wide(self, unit_stage):
        em = EquilibriumMap(unit_stage)
        # derivative of u/(1+u) peaks at the left endpoint with value 1
        assert abs(lipschitz_estimate(em.g_inv, (0.0, 10.0)) - 1.0) < 1e-3

    def test_equilibrium_inverse_narrow(self, unit_stage):
        em = EquilibriumMap(unit_stage)
        est = lipschitz_estimate(em.g_inv, (1.6, 2.0))
        assert abs(est - 1.0 / 2.6**2) < 1e-4

    def test_monotone_under_inclusion(self, unit_stage):
        em = EquilibriumMap(unit_stage)
        # aligned grids: the sub-interval uses a subset of the same points
        outer = lipschitz_estimate(em.g_inv, (0.0, 4.0), n_grid=4001)
        inner = lipschitz_estimate(em.g_inv, (1.0, 3.0), n_grid=2001)
        assert inner <= outer + 1e-15

    def test_undefined_point_rejected(self):
        f = lambda x: np.where(np.asarray(x) > 1.0, np.nan, np.asarray(x, dtype=float))
        with pytest.raises(DomainError):
            lipschitz_estimate(f, (0.0, 2.0), n_grid=11)


class TestEquilibriumMap:
    def test_algebraic_inverse(self, unit_stage):
        em = EquilibriumMap(unit_stage)
        assert abs(em.g_inv(1.0) - 0.5) < 1e-10
        us = np.linspace(0.0, 8.0, 40)
        np.testing.assert_allclose(em.g_inv(us), us / (1 + us), atol=1e-10)

    def test_inverse_at_zero_is_left_endpoint(self):
        rng = np.random.default_rng(31)
        for _ in range(5):
            stage = random_stage(rng)
            em = EquilibriumMap(stage)
            assert abs(em.g_inv(0.0) - stage.interval[0]) < 1e-9

    def test_sign_dichotomy(self, unit_stage):
        # below the resting point the stage moves up: f(0.25, 1) = 0.5
        assert unit_stage.f_scalar(0.25, 1.0) == 0.5
        em = EquilibriumMap(unit_stage)
        assert 0.25 < em.g_inv(1.0)

    def test_rest_point_is_a_root(self):
        rng = np.random.default_rng(57)
        for _ in range(10):
            stage = random_stage(rng)
            em = EquilibriumMap(stage)
            for u in rng.uniform(0.0, 5.0, 4):
                assert abs(stage.f_scalar(em.g_inv(float(u)), float(u))) < 1e-9

    def test_negative_input_rejected(self, unit_stage):
        with pytest.raises(DomainError):
            EquilibriumMap(unit_stage).g_inv(-0.5)

    def test_g_blows_up_at_right_endpoint(self, unit_stage):
        em = EquilibriumMap(unit_stage)
        assert em.g(1.0) == np.inf
        assert em.g(0.0) == 0.0
