"""Exception types shared across the package."""


class MispriceError(Exception):
    """Base class for all package-specific errors."""


class DomainError(MispriceError, ValueError):
    """A parameter violates one of the model's standing inequalities."""


class DegenerateHistory(MispriceError):
    """A regression was requested on a history with zero price variance."""


class NotConverged(MispriceError):
    """An iterative routine hit its iteration/horizon ceiling.

    The offending last iterate is attached so the caller can decide what
    to do with it.
    """

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class CalibrationError(MispriceError):
    """Market calibration produced an infeasible primitive (e.g. cost <= 0)."""


class EmptySupport(MispriceError, ValueError):
    """A sampling interval has empty intersection with the price box."""


class StepSizeError(MispriceError):
    """The fixed-step integrator produced a non-finite state."""


class RangeError(MispriceError, ValueError):
    """An input lies outside the invertible/admissible range of a map."""
