"""Mean-field herding games: equilibria, kinetic dynamics and macroscopic closure."""

from . import cost, manifold, nash
from .errors import (
    ConfigurationError,
    DomainError,
    NashkinError,
    NonConvergenceError,
    NumericalError,
    SchemeInstabilityError,
    StructuralError,
    UnsupportedOperationError,
)

__version__ = "0.1.0"

__all__ = [
    "cost",
    "manifold",
    "nash",
    "ConfigurationError",
    "DomainError",
    "NashkinError",
    "NonConvergenceError",
    "NumericalError",
    "SchemeInstabilityError",
    "StructuralError",
    "UnsupportedOperationError",
]
