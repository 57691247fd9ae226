"""Exception hierarchy. The CLI maps these onto exit codes 2 and 3."""


class ReservoirError(Exception):
    """Base class for all package errors."""


class InputError(ReservoirError, ValueError):
    """Malformed input data (bad CSV row, negative discharge, short sequence)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ReservoirError, ValueError):
    """Inconsistent model or solver configuration."""


class NumericalError(ReservoirError, ArithmeticError):
    """A numerical routine failed to produce a usable result."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InstabilityError(NumericalError):
    """Non-finite values appeared while marching the value function."""

    def __init__(self, step, regime, vertex):
        super().__init__(
            f"non-finite value at step {step} (regime {regime}, vertex {vertex})"
        )
        self.step = step
        self.regime = regime
        self.vertex = vertex
