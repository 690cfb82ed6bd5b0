"""Exception types raised across the package."""


class SpikeDynError(Exception):
    """Base class for all package errors."""


class DomainError(SpikeDynError, ValueError):
    """A parameter lies outside the region where an operation is defined."""


class DegenerateInputError(SpikeDynError, ValueError):
    """Input is numerically degenerate (zero correlation, vanishing coupling)."""


class DivergenceError(SpikeDynError, FloatingPointError):
    """An iterative update blew past the divergence threshold."""


class PhaseNotFoundError(SpikeDynError, LookupError):
    """A phase threshold was never reached on the recorded trajectory."""


class ConfigError(SpikeDynError, ValueError):
    """Experiment configuration is malformed."""
