"""Exception hierarchy shared across the toolkit.

Configuration and usage problems map to CLI exit code 2; numerical failures
during a run map to exit code 1.
"""


class DscLabError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DscLabError, ValueError):
    """Invalid configuration, experiment file, or argument-domain violation."""


class ShapeError(ConfigError):
    """Array argument has the wrong shape."""


class NumericalError(DscLabError, ArithmeticError):
    """A computation produced non-finite or otherwise unusable values."""


class DivergenceError(NumericalError):
    """Integration left the finite range.

    Attributes:
        time: first grid time at which a non-finite state appeared.
    """

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


class GainFloorError(NumericalError):
    """A stage gain dropped below the configured positive floor."""


class ConditioningError(NumericalError):
    """A matrix was too ill-conditioned to invert reliably."""
