"""Shared exception types."""


class ConfigError(Exception):
    """Invalid configuration. Carries the full list of problems found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class DivergenceError(RuntimeError):
    """The time integration produced non-finite values."""

    def __init__(self, message, step=None, time=None, partial=None):
        super().__init__(message)
        self.step = step
        self.time = time
        self.partial = partial
