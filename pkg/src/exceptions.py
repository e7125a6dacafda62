"""Custom exceptions for the agent-network reachability toolkit"""


class ReachError(Exception):
    """Base exception class for reachability errors"""
    pass


class ModelFormatError(ReachError):
    """Exception raised when a model file cannot be parsed"""
    pass


class ModelValidationError(ReachError):
    """Exception raised when a model fails semantic validation"""
    pass


class UnassignedSymbol(ReachError):
    """Exception raised when an expression references a symbol without a value"""
    pass


class NonPositiveDenominator(ReachError):
    """Exception raised when a rate denominator evaluates to a non-positive value"""
    pass


class NotDivisible(ReachError):
    """Exception raised when a reaction rate lacks the source-state factor"""
    pass


class NonFiniteDerivative(ReachError):
    """Exception raised when an ODE right-hand side returns NaN or inf"""
    pass


class PositivityFloorBreached(ReachError):
    """Exception raised when a monitored state drops below the positivity floor"""
    pass


class SignChangingCoefficient(ReachError):
    """Exception raised when an envelope coefficient changes sign on [0;T]"""
    pass


class NonAffineDenominatorUncertainty(ReachError):
    """Exception raised when a denominator is not a positive affine form in states"""
    pass


class BoundExceedsDenominator(ReachError):
    """Exception raised when a reciprocal bound is requested at or beyond its pole"""
    pass


class UncertaintyOutOfBounds(ReachError):
    """Exception raised when an uncertainty value exceeds its admissible bound"""
    pass


class EnvelopeNonnegativityViolated(ReachError):
    """Exception raised when an envelope rate can become negative at the current epsilon"""
    pass


class OutputError(ReachError):
    """Exception raised during output generation"""
    pass
