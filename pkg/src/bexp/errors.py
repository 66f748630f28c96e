"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """Non-finite value reached a loss, gradient, or parameter (CLI exit code 3)."""


class WarmupError(RuntimeError):
    """An operation needs more data than has been collected so far."""
