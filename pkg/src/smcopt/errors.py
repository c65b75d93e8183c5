"""Shared exception types for solvers and problem construction."""


class SmcError(Exception):
    """Base class for all smcopt errors."""


class DimensionMismatch(SmcError, ValueError):
    """An input vector or matrix has the wrong shape."""


class Infeasible(SmcError):
    """The feasible set is empty (detected by a phase-1 solve)."""


class Unbounded(SmcError):
    """The objective decreases without bound on the feasible set."""


class IterationLimit(SmcError):
    """An iterative solver hit its iteration cap before converging.

    Carries the best point found so far in ``x`` and ``value``.
    """

    def __init__(self, message, x=None, value=None):
        super().__init__(message)
        self.x = x
        self.value = value


class UnsupportedAtom(SmcError):
    """An atom or set piece has no exact LP/QP lowering."""


class CapExceeded(SmcError):
    """An enumeration would exceed its configured size cap."""


class BadDims(SmcError, ValueError):
    """Generator arguments are dimensionally inconsistent."""


class ShapeMismatch(SmcError, ValueError):
    """Inputs do not match the structural requirements of a bound rule."""


class MissingBounds(SmcError, ValueError):
    """A model needs big-M bounds that were not supplied."""
