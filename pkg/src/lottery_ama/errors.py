"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so every failure raised from
library code should be one of these types.
"""


class AmaError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(AmaError, ValueError):
    """Malformed configuration, shape mismatch or invalid argument."""

    exit_code = 2


class NumericalError(AmaError, ArithmeticError):
    """A non-finite value appeared in parameters, losses or gradients."""

    exit_code = 3


class ParameterError(NumericalError):
    """Non-finite learnable parameters handed to a materializer."""


class TrainingError(NumericalError):
    """Training diverged; carries the offending step or parameter name."""


class InvariantViolation(AmaError):
    """An internal consistency check failed (e.g. a negative payment)."""

    exit_code = 4
