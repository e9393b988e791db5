"""Exception hierarchy shared by all modules."""


class SensorCodeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SensorCodeError, ValueError):
    """Invalid scenario or experiment configuration."""


class NumericalError(SensorCodeError, ArithmeticError):
    """A numerical routine failed (singular matrix, non-normalizable table, ...)."""


class SingularModelError(NumericalError):
    """Covariance (sub)matrix is not positive definite even after jitter."""


class CapacityError(SensorCodeError, MemoryError):
    """A dense table would exceed the configured cell budget."""


class ArtifactError(SensorCodeError):
    """A design artifact could not be read or written."""


class SchemaVersionError(ArtifactError):
    pass


class InvariantError(ArtifactError, ValueError):
    """Loaded data violates a named invariant."""

    def __init__(self, invariant, detail=""):
        self.invariant = invariant
        msg = f"invariant violated: {invariant}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
