"""Exception hierarchy shared by every module."""


class NDMultiplexError(Exception):
    """Base class for toolkit errors."""


class ValidationError(NDMultiplexError, ValueError):
    """Invalid input: bad parameters, shapes, or non-finite values."""


class ShapeError(ValidationError):
    """Matrix or vector dimensions are incompatible with the operation."""


class InfeasibleError(ValidationError):
    """The request cannot be satisfied (e.g. too few frames to keep full rank)."""


class BudgetError(ValidationError):
    """A combinatorial search would exceed its evaluation budget."""


class NormalizationError(ValidationError):
    """A trace cannot be normalized because it is identically zero."""


class ConvergenceError(NDMultiplexError, RuntimeError):
    """An iterative solver stopped at its iteration cap.

    The best iterate found so far is attached as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
