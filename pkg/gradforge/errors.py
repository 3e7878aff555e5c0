"""Exceptions raised by the library. The runner maps them to exit codes."""


class GradforgeError(Exception):
    exit_code = 2


class ShapeError(GradforgeError, ValueError):
    pass


class DomainError(GradforgeError, ValueError):
    pass


class ConfigError(GradforgeError, ValueError):
    """Invalid configuration value. ``key`` names the offending config key."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class ParseError(GradforgeError, ValueError):
    """Malformed input file. ``line`` is 1-based."""

    def __init__(self, path, line, message):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class UnsupportedDerivativeError(GradforgeError, ValueError):
    pass


class DivergenceError(GradforgeError, ArithmeticError):
    exit_code = 3


class LabelError(GradforgeError, IndexError):
    pass


class GradcheckError(GradforgeError):
    """Analytic and numerical gradients disagree beyond the tolerance."""
    exit_code = 4
