"""Exception types shared across the package."""


class LowrankLabError(Exception):
    """Base class for all package errors."""


class ValidationError(LowrankLabError):
    """Invalid arguments or configuration."""


class RankDeficiencyError(ValidationError):
    """A matrix does not have the numerical rank an operation requires."""


class NumericOverflowError(LowrankLabError):
    """Non-finite values encountered in a single-step update."""


class DivergenceError(LowrankLabError):
    """A trajectory blew past the divergence threshold."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class InsufficientDataError(LowrankLabError):
    """Not enough samples in a window to fit or detect anything."""
