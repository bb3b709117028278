"""Convergence certificates for delayed feedback cascades.

The package certifies that an inhibitory feedback loop around a cascade
of delays, pointwise maps, and scalar monotone stages cannot sustain
oscillations: per-stage amplitude gains are extracted from each stage's
equilibrium map, composed along the chain, and tested against the loop
contraction condition.  Every certificate can be cross-checked by direct
delay-differential simulation.
"""

from .behaviors import (
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
    Table,
    TableLookup,
    apply_delay,
    apply_memoryless,
    lipschitz_estimate,
)
from .gains import (
    Composed,
    ContractionVerdict,
    GainFunction,
    GridSpec,
    Linear,
    PiecewiseLinear,
    PowerLaw,
    compose,
    identity_gain,
    is_contraction,
)
from .signals import (
    BoxSet,
    Signal,
    asymptotic_amplitude,
    converges_to,
    diameter,
    limit_value,
    omega_limit_diameter,
)

__version__ = "0.1.0"

from .decrease import (  # noqa: E402
    CascadeGain,
    CustomDecrease,
    DistanceToInterval,
    StageGain,
    VerificationReport,
    cascade_gain,
    stage_gain,
    verify_u_decrease,
)
from .simulate import (  # noqa: E402
    History,
    SimConfig,
    Trajectory,
    ensemble,
    simulate_closed,
    simulate_open,
)
from .certify import (  # noqa: E402
    Certificate,
    GainCheckReport,
    ValidationReport,
    certify,
    empirical_gain_check,
    validate_certificate,
)
