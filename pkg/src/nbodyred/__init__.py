"""Reduced dynamics, special solutions and variational orbits of the
n-body problem in euclidean spaces of arbitrary dimension."""

from .errors import (
    CollisionApproach,
    CollisionAtNode,
    CollisionError,
    DegenerateConfiguration,
    InfeasibleSpectrum,
    InvalidStructure,
    NBodyError,
    NegativeSquaredDistance,
    NoConvergence,
    NotAttractive,
    NotBalanced,
    NotCentral,
    NotEmbeddable,
    NumericalError,
    StepFailure,
    ValidationError,
)
from .geometry import (
    Bivector,
    COLLISION_FLOOR,
    Configuration,
    MassSystem,
    RelativeState,
    State,
    angular_momentum,
    beta_to_distances,
    bivector_component,
    bivector_norm_and_frequencies,
    characteristic_coefficients,
    gram_form,
    hermitian_from_bivector,
    inertia,
    inertia_operator_apply,
    potential_and_gradient,
    rotation_invariants,
    wintner_conley,
)

__version__ = "0.1.0"
