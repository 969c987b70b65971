"""Poisson entropy inequalities: Wu's modified log-Sobolev bound, its deficit,
ULC stability, and the Poisson-Follmer process behind them."""

__version__ = "0.1.0"

from .errors import (
    DiagnosticError,
    DomainError,
    InputError,
    InvariantViolation,
    NumericalError,
    PoissonMLSIError,
    PreconditionError,
    ReachError,
    SimulationError,
    TruncationError,
)
from .functionals import deficit, deficit_report, entropy_functional, wu_rhs
from .semigroup import DensityFunction, ProblemSpec

__all__ = [
    "__version__",
    "DensityFunction",
    "ProblemSpec",
    "deficit",
    "deficit_report",
    "entropy_functional",
    "wu_rhs",
    "PoissonMLSIError",
    "InputError",
    "DomainError",
    "PreconditionError",
    "NumericalError",
    "TruncationError",
    "SimulationError",
    "ReachError",
    "DiagnosticError",
    "InvariantViolation",
]
