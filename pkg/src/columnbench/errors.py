"""Exception types raised across the package."""


class InvalidArgument(ValueError):
    """A precondition on an argument was violated."""


class InvalidMode(ValueError):
    """An operation was requested under a moisture mode that does not support it."""


class ConfigError(ValueError):
    """A run configuration failed validation.

    ``field`` names the offending key so callers can report it.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class KernelError(RuntimeError):
    """A column kernel raised while processing ``column``."""

    def __init__(self, column, cause):
        super().__init__(f"kernel failed on column {column}: {cause!r}")
        self.column = column
        self.cause = cause
