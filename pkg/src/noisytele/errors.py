"""Exception types."""


class DimensionError(ValueError):
    """Operands have incompatible or invalid dimensions."""


class ConsistencyError(RuntimeError):
    """A computed quantity violates a proven bound by more than round-off."""


class ConfigError(ValueError):
    """Invalid experiment or estimator configuration."""
