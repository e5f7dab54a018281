"""Exception hierarchy shared across the package."""


class FsmdpError(Exception):
    """Base class for all package errors."""


class ConfigError(FsmdpError, ValueError):
    """Invalid scopes, tables, orders or experiment configuration."""


class ScaleError(FsmdpError):
    """Raised when a brute-force path would have to enumerate too many states."""

    def __init__(self, size, limit):
        super().__init__(f"brute-force scale exceeded: joint size {size} > limit {limit}")
        self.size = size
        self.limit = limit


class SolverError(FsmdpError):
    """The small-LP simplex failed (pivot budget, unboundedness, infeasibility)."""

    def __init__(self, message, dump=None):
        super().__init__(message if dump is None else f"{message}\n{dump}")
        self.dump = dump


class InfeasibleError(FsmdpError):
    """The cutting-plane driver never found a feasible weight vector."""


class InvariantError(FsmdpError):
    """An internal consistency check failed (should not happen)."""
