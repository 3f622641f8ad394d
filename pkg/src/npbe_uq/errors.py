"""Exception types shared across the package."""


class NpbeUqError(Exception):
    """Base class for all package errors."""


class DomainError(NpbeUqError):
    """A point or parameter lies outside its admissible domain."""


class MapOrientationError(NpbeUqError):
    """The domain map is orientation-violating (det J <= 0 somewhere)."""


class AssemblyError(NpbeUqError):
    """Operator assembly failed (e.g. non-SPD face tensor)."""


class ConvergenceError(NpbeUqError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history or []


class IncompleteStoreError(NpbeUqError):
    """A sparse-grid evaluation store is missing knots."""


class HypothesisViolationError(NpbeUqError):
    """Inputs violate the hypotheses of a closed-form bound."""

    def __init__(self, message, violated=None):
        super().__init__(message)
        self.violated = violated


class ConfigError(NpbeUqError):
    """Run configuration is invalid."""


class ParseError(NpbeUqError):
    """Charge-file parsing failed."""
