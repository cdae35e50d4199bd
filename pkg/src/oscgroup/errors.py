"""Exception and warning types raised across the package."""


class OscGroupError(Exception):
    """Base class for all package errors."""


class DivergenceError(OscGroupError, FloatingPointError):
    """Integration produced a non-finite state."""

    def __init__(self, message, index=None, time=None):
        super().__init__(message)
        self.index = index
        self.time = time


class NotBracketedError(OscGroupError, ValueError):
    pass


class DegenerateInputError(OscGroupError, ValueError):
    pass


class DimensionError(OscGroupError, ValueError):
    pass


class DegenerateTraceError(OscGroupError, ValueError):
    """One or more traces are constant over the analysis window."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class EmptyClusterError(OscGroupError, RuntimeError):
    pass


class RangeError(OscGroupError, ValueError):
    pass


class TileError(OscGroupError, ValueError):
    pass


class ParseError(OscGroupError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(OscGroupError, ValueError):
    """Invalid run configuration."""


class NonConvergenceWarning(UserWarning):
    pass
