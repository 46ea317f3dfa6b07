"""Exceptions raised throughout reachcore.

Every error derives from :class:`ReachError`, which is itself a
``ValueError``, so code that already guards against bad values keeps
working.
"""


class ReachError(ValueError):
    """Base class for all reachcore errors."""


# interval kernel
class IntervalError(ReachError):
    """Base class for errors raised by the interval kernel."""


class InvalidInterval(IntervalError):
    """An interval was constructed with ``lo > hi`` or a NaN endpoint."""


class DivisionByZeroInterval(IntervalError):
    """The denominator interval contains zero."""


class DomainError(IntervalError):
    """An elementary function was applied outside its domain."""


class TanSingularity(IntervalError):
    """The argument of ``tan`` contains a pole."""


class EmptyResult(IntervalError):
    """An intersection of bounds came out empty."""


class DimensionMismatch(IntervalError):
    """Operand dimensions are incompatible."""


class NonSquare(IntervalError):
    """A square matrix was required."""


# expressions and inclusion functions
class ExpressionError(ReachError):
    """Base class for errors raised while building or using expression graphs."""


class ParseError(ExpressionError):
    """An expression document does not follow the grammar."""


class UnknownOp(ParseError):
    """An expression node names an unsupported operation."""


class ArityError(ParseError):
    """An expression node has the wrong number of children."""


class NonDifferentiableOp(ExpressionError):
    """Symbolic differentiation hit ``abs`` or ``relu``."""


class DecompositionPropertyViolation(ExpressionError):
    """A user-supplied decomposition function failed the randomized checks."""


class DimensionTooLarge(ExpressionError):
    """The brute-force oracle was asked for more than four variables."""


class OutsideLocalization(ReachError):
    """An input box is not contained in the domain an inclusion was built for."""


# networks
class NetworkError(ReachError):
    """Base class for errors raised while loading networks."""


class SchemaError(NetworkError):
    """A weights document does not follow the expected layout."""


class DimChainError(NetworkError):
    """Consecutive layer shapes do not chain."""


class UnsupportedActivation(NetworkError):
    """A layer names an activation outside relu, tanh, sigmoid and identity."""


# integration and checking
class IntegrationError(ReachError):
    """Base class for errors raised while integrating reach tubes."""


class OrderViolation(IntegrationError):
    """A lower bound overtook its upper bound during integration."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FaceOrderViolation(IntegrationError):
    """A face substitution produced a box with ``lo > hi``."""


class BranchExplosion(IntegrationError):
    """Partitioning would create more branches than allowed."""


class InconsistentConstraint(IntegrationError):
    """Redundant-variable propagation emptied a box."""


class HorizonMismatch(IntegrationError):
    """A reach tube does not cover the horizon a specification asks about."""
