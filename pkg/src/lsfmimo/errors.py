"""Exception and warning types shared across the package."""


class ConfigError(ValueError):
    """Raised when a configuration value is missing, malformed, or out of range."""


class DimensionError(ValueError):
    """Raised when array shapes or protocol dimensions are inconsistent."""


class SingularMatrix(ArithmeticError):
    """Raised when a gain matrix is too ill-conditioned to invert.

    Attributes:
        pilot_index: index of the pilot sequence whose matrix failed.
        condition: estimated condition number that triggered the failure.
    """

    def __init__(self, pilot_index: int, condition: float):
        self.pilot_index = pilot_index
        self.condition = condition
        super().__init__(
            f"gain matrix for pilot {pilot_index} is numerically singular "
            f"(condition number {condition:.3e})"
        )


class ExperimentAborted(RuntimeError):
    """Raised when too many network draws had to be skipped to trust the result."""


class DegenerateWeights(UserWarning):
    """Warned when a combining row is identically zero, so the SINR is zero."""
