"""Exception hierarchy shared by all modules."""


class RdStatsError(Exception):
    """Base class for every error raised by the package."""


class GeometryError(RdStatsError, ValueError):
    pass


class CoincidentPoints(GeometryError):
    """Two points are closer than the coincidence tolerance."""


class PoleUndefined(GeometryError):
    """A rhumb bearing was requested from or to a pole."""


class AntipodalBearings(GeometryError):
    """The two bearings of a bisector differ by 180 degrees."""


class DomainError(RdStatsError, ValueError):
    pass


class DataError(RdStatsError):
    """Problems with user supplied data (exit code 1 in the CLI)."""


class ParseError(DataError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class ValidationError(DataError, ValueError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class DuplicateId(DataError):
    pass


class EmptyDataset(DataError):
    pass


class NumericalError(RdStatsError):
    """Numerical failures (exit code 2 in the CLI)."""


class NonFiniteValue(NumericalError):
    pass


class EmptyCodebook(NumericalError):
    pass


class InsufficientPoints(NumericalError):
    pass


class TooManyFailures(NumericalError):
    pass


class DegenerateCovariance(NumericalError):
    pass
