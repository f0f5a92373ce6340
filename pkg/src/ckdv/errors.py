"""Exception types shared across the package."""


class GridMismatchError(ValueError):
    """Fields defined on different grids were combined."""


class SeamError(ValueError):
    """A field used with x-multiplication has support touching the periodic seam."""


class FieldFormatError(ValueError):
    """A binary field dump is malformed, truncated or of the wrong version."""


class InvalidCoefficientsError(ValueError):
    """System coefficients violate the standing assumptions."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid coefficients: " + ", ".join(self.violations))


class IntegrationFault(RuntimeError):
    """Non-finite or runaway values appeared during time stepping.

    ``trajectory`` holds everything computed before the fault.
    """

    def __init__(self, time, trajectory=None, message=None):
        self.time = float(time)
        self.trajectory = trajectory
        super().__init__(message or f"blow-up detected at t={self.time:.6g}")


class ConfigError(ValueError):
    """A run configuration is missing keys or has values of the wrong type."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
