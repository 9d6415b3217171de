"""Exception hierarchy shared by all modules."""


class ResolventError(Exception):
    """Base class for errors raised by this package."""


class DomainError(ResolventError, ValueError):
    """Evaluation requested outside the domain of a function (e.g. at a pole)."""


class HypothesisError(ResolventError, ValueError):
    """A structural hypothesis on the potential or coefficients is violated."""

    def __init__(self, message, hypothesis=None):
        super().__init__(message)
        self.hypothesis = hypothesis


class UnsupportedConfiguration(ResolventError, NotImplementedError):
    """The requested configuration is outside what is implemented."""


class GeometryError(ResolventError, ValueError):
    """Box, cone or mask geometry is inconsistent."""


class ResolutionError(ResolventError, ValueError):
    """A grid is too coarse for the semiclassical scale."""


class UndefinedQuotientError(ResolventError, ZeroDivisionError):
    """A Rayleigh-type quotient has a vanishing denominator."""


class DegenerateBasisError(ResolventError, ArithmeticError):
    """The dominant ODE solution vanished on the integration path."""


class NotASolutionError(ResolventError, ValueError):
    """Supplied data does not solve the stated equation to tolerance."""


class BasisTooSmallError(ResolventError, ValueError):
    """Mode basis misses a non-negligible part of the field."""

    def __init__(self, message, tail_fraction=None):
        super().__init__(message)
        self.tail_fraction = tail_fraction


class SingularOperatorError(ResolventError, ArithmeticError):
    """Sparse factorization failed."""

    def __init__(self, message, nearest_eigenvalue=None):
        super().__init__(message)
        self.nearest_eigenvalue = nearest_eigenvalue


class ConvergenceError(ResolventError, RuntimeError):
    """An iteration did not converge; carries its history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class FitError(ResolventError, ValueError):
    """Not enough data for a fit."""


class SweepError(ResolventError, RuntimeError):
    """Too many per-point failures in a sweep."""

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = dict(failures or {})


class ConfigError(ResolventError, ValueError):
    """Configuration does not validate against the schema."""
