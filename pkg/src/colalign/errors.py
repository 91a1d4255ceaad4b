"""Exception hierarchy shared by every colalign module."""


class ColalignError(Exception):
    """Base class for all library errors."""


class ValidationError(ColalignError, ValueError):
    """Input violates a documented precondition."""


class BoundsError(ValidationError):
    """A patch region falls outside its image."""


class DegenerateRegionError(ValidationError):
    """A patch region has zero area."""


class ZeroIntensityError(ValidationError):
    """Chromaticity requested for a colour whose channel sum is zero."""


class DomainError(ValidationError):
    """Curve evaluated outside [0, 1]."""


class MonotonicityError(ValidationError):
    """A response curve is not monotone where it must be."""


class DimensionError(ValidationError):
    """Array shapes or lengths do not agree."""


class DegenerateRowError(ValidationError):
    """A CCP row cannot be aligned because its first and last entries coincide."""

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"row {row} has equal first and last entries")


class InsufficientDataError(ValidationError):
    """Too few images, patches or comparisons for the requested operation."""


class DegenerateRegressionError(ValidationError):
    """Least-squares fit with a zero-variance regressor."""


class DegenerateChannelError(ValidationError):
    """White-balance gain undefined because a channel statistic is zero."""


class UndefinedRatioError(ValidationError):
    """BR chromaticity ratio undefined because a chromaticity is zero."""


class ConfigurationError(ValidationError):
    """Invalid or missing configuration (paths, empty databases, bad options)."""


class ParseError(ColalignError, ValueError):
    """Malformed reference data.

    ``block`` is the zero-based index of the offending record when known.
    """

    def __init__(self, message, block=None):
        self.block = block
        if block is not None:
            message = f"block {block}: {message}"
        super().__init__(message)


class NumericalError(ColalignError, ArithmeticError):
    """A numerical procedure failed to produce a finite result."""


class OptimisationFailedError(NumericalError):
    """Every optimisation restart ended with a non-finite cost."""


class ZeroVectorError(ValidationError):
    """Angle requested between colours where one is the zero vector."""
