"""Exception hierarchy.

Validation errors (bad user input) derive from :class:`ValidationError`;
numerical failures (collisions, non-convergence, ...) derive from
:class:`NumericalError`.  The CLI maps the former to exit code 2 and the
latter to exit code 3.
"""


class NBodyError(Exception):
    pass


class ValidationError(NBodyError):
    pass


class NumericalError(NBodyError):
    pass


class CollisionError(NumericalError):
    """Two bodies closer than the collision floor."""


class NegativeSquaredDistance(NumericalError):
    """A Gram table produced a squared distance below -tol."""


class StepFailure(NumericalError):
    """The integrator's step size underflowed."""


class InvalidStructure(ValidationError):
    """A bivector does not define a (degenerate) hermitian structure."""


class DegenerateConfiguration(NumericalError):
    """Total collision (moment of inertia ~ 0)."""


class NoConvergence(NumericalError):
    """An iterative solver ran out of iterations."""


class InfeasibleSpectrum(ValidationError):
    """Requested inertia spectrum has rank exceeding n - 1."""


class NotEmbeddable(NumericalError):
    """Squared distances admit no euclidean realization."""


class NotCentral(ValidationError):
    """Configuration fails the central-configuration residual test."""


class NotBalanced(ValidationError):
    """Configuration fails the commutation (balance) residual test."""


class NotAttractive(NumericalError):
    """Interaction matrix not negative on the configuration's image."""


class CollisionAtNode(NumericalError):
    """A loop passes below the collision floor at a quadrature node."""


class CollisionApproach(NumericalError):
    """Line search could not stay above the distance floor."""
