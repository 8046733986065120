"""Exception hierarchy shared by all pamlab modules."""


class PamError(Exception):
    """Base class for every error raised by pamlab."""


class InvalidArgument(PamError, ValueError):
    pass


class DomainError(PamError, ValueError):
    """Argument outside the domain where the quantity is defined or finite."""


class InfiniteCumulantError(DomainError):
    pass


class NoStationaryPointError(DomainError):
    pass


class DegenerateTruncationError(DomainError):
    pass


class PreconditionError(PamError, ValueError):
    pass


class ConvergenceError(PamError, RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class PamOverflowError(PamError, OverflowError):
    pass


class UsageError(PamError, ValueError):
    pass


class InfeasibleError(PamError, RuntimeError):
    """Requested Monte Carlo run would need an unaffordable sample size."""
