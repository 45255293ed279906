"""Exception types raised across the package."""


class NlperimError(Exception):
    """Base class for all errors raised by nlperim."""


class DomainError(NlperimError, ValueError):
    pass


class NonPositiveInterval(DomainError):
    pass


class OrderingError(DomainError):
    pass


class OverlapError(DomainError):
    pass


class ResolutionError(NlperimError):
    pass


class DegenerateSet(NlperimError):
    pass


class ToleranceNotMet(NlperimError):
    """Quadrature did not reach the requested tolerance.

    The best available estimate and its error are kept on the exception so
    callers can decide whether the value is still usable.
    """

    def __init__(self, message, value=float("nan"), error=float("inf")):
        super().__init__(message)
        self.value = value
        self.error = error


class NotOnBoundary(DomainError):
    pass


class NoCancellation(NlperimError):
    pass


class RegularityError(NlperimError):
    pass


class SizeMismatch(NlperimError, ValueError):
    pass


class CellNotFree(NlperimError, ValueError):
    pass


class TooLarge(NlperimError):
    pass


class ResourceCapExceeded(NlperimError):
    pass


class NoInteriorBalls(NlperimError):
    pass


class UnboundedTrace(DomainError):
    pass


class RegionOutOfDomain(DomainError):
    pass


class OriginNotOnBoundary(DomainError):
    pass


class RoughnessError(NlperimError):
    pass


class AliasWarning(UserWarning):
    pass


class EmptyBoundary(NlperimError):
    pass


class InsufficientRows(NlperimError):
    pass


class Inconclusive(NlperimError):
    pass
