"""Exception hierarchy shared by all nashkin modules."""


class NashkinError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(NashkinError, ValueError):
    """Array shapes or grid references do not fit together."""


class UnsupportedOperationError(NashkinError):
    """The operation is not defined on this kind of decision manifold."""


class DomainError(NashkinError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class NumericalError(NashkinError):
    """A numerical procedure failed (instability, non-convergence)."""


class NonConvergenceError(NumericalError):
    """An iteration hit its budget before meeting the tolerance.

    The last computed residual is carried in ``residual``.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SchemeInstabilityError(NumericalError):
    """A time step produced clearly negative densities."""


class ConfigurationError(NashkinError, ValueError):
    """Invalid run parameters (including CFL / step-size violations)."""
