"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid or inconsistent problem configuration (CLI exit code 2)."""


class CoverageError(ConfigurationError):
    """The ball-coverage lower bound |B_delta(x) & perforated domain| >= C0 fails."""

    def __init__(self, message, worst_value=None, worst_index=None):
        super().__init__(message)
        self.worst_value = worst_value
        self.worst_index = worst_index


class IntegrationError(RuntimeError):
    """Time integration produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConvergenceError(RuntimeError):
    """An iterative method exhausted its budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
