"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: validation/config -> 2, insufficient
data -> 3, numeric failure (divergence, degeneracy) -> 4.
"""


class SpecmapError(Exception):
    """Base class for every error raised by the toolkit."""


class ValidationError(SpecmapError, ValueError):
    """Malformed input or a violated field invariant."""

    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field


class ConfigError(SpecmapError, ValueError):
    """Invalid configuration value or unknown configuration key."""


class InsufficientDataError(SpecmapError):
    """Too few samples, bins or slots to compute the requested quantity."""


class NumericError(SpecmapError, ArithmeticError):
    """Base for numeric failures."""


class DegenerateError(NumericError):
    """Geometrically degenerate input (co-located points, singular system)."""

    def __init__(self, message, indices=None):
        super().__init__(message)
        self.indices = indices


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class SurrogateStateError(SpecmapError, RuntimeError):
    """A surrogate was used before it was fitted."""
