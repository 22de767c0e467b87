"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class FCDError(Exception):
    """Base class for every error raised by :mod:`fcd`."""


class DomainError(FCDError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(FCDError, ValueError):
    """Array dimensions do not agree."""


class DegenerateNoiseError(DomainError):
    """The scaled Lasso residual collapsed to zero (noise level degenerate)."""


class DegenerateVarianceError(FCDError, ArithmeticError):
    """A debiased coordinate has non-positive variance (rank collapse)."""


class NumericalError(FCDError, ArithmeticError):
    """A numerical routine failed (non-PD covariance, ill-conditioned inverse)."""
