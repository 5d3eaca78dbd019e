"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid grid, scenario or experiment configuration."""


class InvariantViolation(RuntimeError):
    """A property guaranteed by the scheme failed during a run."""


class ControllerError(RuntimeError):
    """A controller produced an inadmissible (nonpositive) demand."""
