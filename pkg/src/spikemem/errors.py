"""Exception types shared across modules (and mapped to CLI exit codes)."""


class ConfigError(ValueError):
    """Invalid configuration value; message names the offending field."""


class CapacityError(RuntimeError):
    """Placement ran out of budget-passing slots."""

    def __init__(self, message: str, unplaceable: int = 0):
        super().__init__(message)
        self.unplaceable = unplaceable


class DataError(RuntimeError):
    """Dataset or file-format problem."""
