"""Exception hierarchy.

Parameter problems derive from :class:`InvalidParameterError` (a ``ValueError``);
everything else signals a numerical failure of a well-posed request.
"""


class EpdiffError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(EpdiffError, ValueError):
    """A parameter is outside its admissible range."""


class GridMismatchError(InvalidParameterError):
    """Operands live on different grids or have incompatible shapes."""


class RealityError(InvalidParameterError):
    """A field or symbol violates the reality condition."""


class DiffeoInvariantError(EpdiffError):
    """The Jacobian determinant of a displacement is not positive everywhere."""

    def __init__(self, message, min_jacobian=None):
        super().__init__(message)
        self.min_jacobian = min_jacobian


class InversionError(EpdiffError):
    """Diffeomorphism inversion did not converge within its iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularOperatorError(EpdiffError):
    """A realized operator is numerically singular on the truncated space."""

    def __init__(self, message, smallest_singular_value=None):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value


class BlowUpSuspected(EpdiffError):
    """The integrator stopped because a growth or CFL guard tripped.

    This is a report about the discrete computation, not a statement about
    the continuous equation.
    """

    def __init__(self, message, time, norm_history):
        super().__init__(message)
        self.time = time
        self.norm_history = list(norm_history)
