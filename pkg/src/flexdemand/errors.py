"""Exception types raised across the package."""


class FlexDemandError(Exception):
    """Base class for all package errors."""


class SchemaError(FlexDemandError, ValueError):
    """Malformed CSV header, column map, or configuration."""


class OrderingError(FlexDemandError, ValueError):
    """Timestamps are not strictly increasing."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DimensionError(FlexDemandError, ValueError):
    """Array shapes or channel counts do not match."""


class EmptyDataError(FlexDemandError, ValueError):
    """Not enough data to build the requested object."""


class InsufficientDataError(EmptyDataError):
    """Fewer samples than an operation requires."""


class SingularMatrixError(FlexDemandError, ArithmeticError):
    """Regressor matrix is rank deficient and no ridge was given."""


class AlignmentError(FlexDemandError, ValueError):
    """Two time-indexed sequences do not cover the same instants."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)
