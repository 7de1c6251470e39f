"""Exception types raised across the package."""


class TriggerkitError(Exception):
    """Base class for all package errors."""


class ValidationError(TriggerkitError, ValueError):
    """A value or configuration violates a stated invariant."""


class ParseError(TriggerkitError):
    """A configuration file could not be parsed."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class NumericalError(TriggerkitError):
    """Base class for failures of a numerical procedure."""


class SpectralAbscissaTooLarge(NumericalError):
    """The truncated closed loop does not decay faster than the requested rate."""


class DegenerateFeedback(NumericalError):
    """The sampled feedback operator S_h F vanishes."""


class EmptyFrontier(NumericalError):
    """No abscissa of a frontier sweep admits a feasible parameter."""


class NoCrossing(NumericalError):
    """A threshold search found no crossing on its search interval."""


class DivergenceDetected(NumericalError):
    """A simulated state norm exceeded the divergence limit."""


class AllZeroTail(NumericalError):
    """A decay fit was requested on a numerically zero trace window."""
