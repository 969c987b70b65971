"""Exception hierarchy.

The CLI maps these onto exit codes: ``InputError`` -> 2, ``NumericalError``
and its subclasses -> 3.
"""


class PoissonMLSIError(Exception):
    """Base class for all package errors."""


class InputError(PoissonMLSIError, ValueError):
    """Malformed or out-of-schema user input (spec files, CLI arguments)."""


class DomainError(PoissonMLSIError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(PoissonMLSIError, ValueError):
    """An operation was called on an input its guarantee does not cover."""


class NumericalError(PoissonMLSIError, ArithmeticError):
    """A numerical procedure could not deliver its accuracy contract."""


class TruncationError(NumericalError):
    """An infinite series could not be truncated within tolerance."""


class NormalizationError(NumericalError):
    """A probability law failed its total-mass check."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not converge within the depth limit."""


class SimulationError(NumericalError):
    """The thinning sampler observed an intensity above its dominating rate."""


class ReachError(SimulationError):
    """A simulated path left the precomputed state range."""


class InvariantViolation(PoissonMLSIError, AssertionError):
    """A checked mathematical invariant failed on the evaluation grid."""

    def __init__(self, name: str, detail: str):
        super().__init__(f"{name}: {detail}")
        self.name = name
        self.detail = detail


class DiagnosticError(NumericalError):
    """A statistical diagnostic has too little data to be meaningful."""
