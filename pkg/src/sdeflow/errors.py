"""Exception types raised across the package."""


class SdeflowError(Exception):
    """Base class for all package errors."""


class InvalidPoint(SdeflowError, ValueError):
    pass


class ProjectionDiverged(SdeflowError, ArithmeticError):
    def __init__(self, iterations: int, message: str = "") -> None:
        self.iterations = iterations
        super().__init__(message or f"projection did not converge after {iterations} iterations")


class NotOnBoundary(SdeflowError, ValueError):
    pass


class MissingDerivative(SdeflowError, NotImplementedError):
    pass


class NotNested(SdeflowError, ValueError):
    pass


class OffGrid(SdeflowError, KeyError):
    pass


class InsufficientSamples(SdeflowError, ValueError):
    pass


class PenaltyBlowup(SdeflowError, ArithmeticError):
    pass


class InsufficientReplicas(SdeflowError, ValueError):
    pass


class OutOfHull(SdeflowError, ValueError):
    pass


class SupportViolation(SdeflowError, ValueError):
    pass


class BadSegment(SdeflowError, ValueError):
    pass


class DegenerateFit(SdeflowError, ValueError):
    pass


class ConfigError(SdeflowError, ValueError):
    pass
