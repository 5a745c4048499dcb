"""Exception hierarchy.

Input problems derive from :class:`ValueError`; failures of the estimation
procedure itself derive from :class:`EstimationError`.
"""


class FamarError(Exception):
    """Base class for all package errors."""


class ShapeError(FamarError, ValueError):
    """Inputs have inconsistent or invalid shapes."""


class EstimationError(FamarError):
    """The estimator is undefined for the given data."""


class DegenerateSpectrumError(EstimationError):
    """A second-moment matrix has no usable leading eigenvectors."""


class SingularGramError(EstimationError):
    """A Gram matrix is singular or too ill-conditioned to invert."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class DegenerateScaleError(EstimationError):
    """The block-averaging scale product is numerically zero."""


class ConvergenceError(FamarError):
    """An iterative routine exceeded its iteration budget."""
