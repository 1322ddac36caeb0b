"""Exception hierarchy shared by all fraclap modules."""


class FracLapError(Exception):
    """Base class for every error raised by fraclap."""


class DomainError(FracLapError, ValueError):
    """Argument lies outside the region where an operation is defined."""


class DiagonalError(DomainError):
    """Two-point kernel evaluated on its diagonal x = y."""


class SingularPoint(DomainError):
    """Point coincides with a singular point (e.g. a Kelvin inversion center)."""


class EmptyDomain(DomainError):
    """A geometric operation produced an empty set."""


class NotOnBoundary(DomainError):
    """Point is not within tolerance of the domain boundary."""


class ToleranceNotMet(FracLapError, ArithmeticError):
    """Adaptive quadrature exhausted its budget before converging."""


class IntegrabilityError(FracLapError, ArithmeticError):
    """A weighted tail integral appears to diverge."""


class CensoringExcess(FracLapError):
    """Too many Monte Carlo walks hit the step cap."""

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class NoContraction(FracLapError):
    """Fixed-point iteration for the potential term cannot be shown to contract."""


class NonConvergence(FracLapError):
    """Fixed-point iteration did not reach its residual target."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []
