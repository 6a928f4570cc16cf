"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A numerical operation failed (non-SPD operator, non-convergence, blow-up)."""


class ConfigError(ValueError):
    """A run configuration is invalid."""
