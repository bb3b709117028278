"""Shared fixtures: the flagship two-stage loop and its analytic pieces."""
from __future__ import annotations

import pytest

from smallgain import Affine, CascadeSpec, Delay, Feedback, ScalarMonotoneOde


def make_unit_stage() -> ScalarMonotoneOde:
    """The canonical stage: alpha(x) = x, beta(x) = 1 - x on [0, 1].

    Its equilibrium map is g(x) = x / (1 - x) with inverse u / (1 + u),
    which makes every expected value computable by hand.
    """
    return ScalarMonotoneOde(Affine(0.0, 1.0), Affine(1.0, -1.0), (0.0, 1.0))


def make_flagship_cascade(k: float = 0.25) -> CascadeSpec:
    """Two unit stages, half-second transport and feedback delays, drive 2."""
    stage = make_unit_stage()
    return CascadeSpec(
        (stage, Delay(0.5), stage),
        Feedback(mu=2.0, k=k, tau=0.5),
    )


@pytest.fixture
def unit_stage() -> ScalarMonotoneOde:
    return make_unit_stage()


@pytest.fixture
def flagship() -> CascadeSpec:
    return make_flagship_cascade()
