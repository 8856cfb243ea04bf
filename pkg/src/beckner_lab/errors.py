"""Semantic exception hierarchy.

Every failure mode gets its own class so callers (and the CLI exit-code
logic) can distinguish bad inputs from violated theorem hypotheses from
honest numerical breakdown.
"""


class BecknerLabError(Exception):
    """Base class for all package errors."""


class DomainError(BecknerLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SizeError(BecknerLabError):
    """A requested state space exceeds the desk-scale cap."""


class HypothesisError(BecknerLabError):
    """A theorem hypothesis is violated; the message names the condition."""


class CapabilityError(BecknerLabError):
    """The operation is not implemented for the requested variant."""


class NumericalError(BecknerLabError):
    """An iterative procedure failed to converge or lost accuracy."""


class DegenerateInputError(BecknerLabError):
    """Input is degenerate for the operation (e.g. a constant density)."""


class DegeneracyError(BecknerLabError):
    """The chain is reducible where irreducibility is required."""


class ReversibilityError(BecknerLabError):
    """The two forms of the Dirichlet form disagree beyond tolerance."""


class ConfigError(BecknerLabError, ValueError):
    """A configuration document failed strict validation."""
