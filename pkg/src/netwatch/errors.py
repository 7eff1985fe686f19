"""Exception hierarchy shared by all netwatch modules."""

from __future__ import annotations


class NetwatchError(Exception):
    """Base class for every error raised by netwatch."""


class ConfigError(NetwatchError, ValueError):
    """Invalid run configuration or invalid user-facing parameter."""


class InvalidOrder(NetwatchError, ValueError):
    pass


class SelfLoopRejected(NetwatchError, ValueError):
    pass


class EmptyIngest(NetwatchError, ValueError):
    def __init__(self, message: str, dropped_self_loops: int = 0):
        super().__init__(message)
        self.dropped_self_loops = dropped_self_loops


class NonContiguousSeries(NetwatchError, ValueError):
    def __init__(self, missing):
        self.missing = list(missing)
        shown = ", ".join(str(m) for m in self.missing[:20])
        more = "" if len(self.missing) <= 20 else f" (+{len(self.missing) - 20} more)"
        super().__init__(f"time labels are not contiguous; missing: {shown}{more}")


class OrderMismatch(NetwatchError, ValueError):
    pass


class MissingPredecessor(NetwatchError, ValueError):
    pass


class WindowTooShort(NetwatchError, ValueError):
    pass


class DimensionMismatch(NetwatchError, ValueError):
    pass


class InvalidAnomaly(NetwatchError, ValueError):
    pass


class NumericalError(NetwatchError, ArithmeticError):
    """Numerical failure: estimation or covariance problems."""


class NonConvergence(NumericalError):
    def __init__(self, message: str, log=None):
        super().__init__(message)
        self.log = list(log or [])


class SingularCovariance(NumericalError):
    pass


class NoUniqueStationary(NumericalError):
    pass


class BracketFailure(NumericalError):
    pass


class NoValidRuns(NumericalError):
    pass


class UndefinedAcf(NumericalError):
    pass


class UnreliableEstimate(UserWarning):
    """A Monte-Carlo estimate is dominated by censored runs."""
