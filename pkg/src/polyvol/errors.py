"""Exception hierarchy.

Two families matter to callers (and to the CLI exit codes): validation errors
are bad inputs, numerical errors are computations that could not finish.
"""


class PolyvolError(Exception):
    """Base class for all package errors."""


class ValidationError(PolyvolError, ValueError):
    pass


class NumericalError(PolyvolError, ArithmeticError):
    pass


class DomainError(ValidationError):
    """Argument outside the domain where a function is defined."""


class InvalidParamsError(ValidationError):
    pass


class EmptySampleError(ValidationError):
    pass


class UnsupportedVariantError(ValidationError):
    """No closed-form volume is registered for this shape."""


class PoleError(NumericalError):
    """A moment estimator hit the exact pole of its rational map."""


class ConvergenceError(NumericalError):
    pass


class RejectionEfficiencyError(NumericalError):
    """Rejection sampling accepts too few candidates to be usable."""


class RankDeficiencyError(NumericalError):
    pass


class OptimizerError(NumericalError):
    pass


class ReplicationError(NumericalError):
    """Too many replications of a Monte Carlo study failed."""
