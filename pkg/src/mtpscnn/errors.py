"""Exception types raised across the toolkit."""


class PhotometricError(Exception):
    """Base class for all toolkit errors."""


class DegenerateVector(PhotometricError, ValueError):
    pass


class DimensionMismatch(PhotometricError, ValueError):
    pass


class GeometryError(PhotometricError, ValueError):
    pass


class InvalidConfig(PhotometricError, ValueError):
    pass


class NumericalError(PhotometricError, ArithmeticError):
    pass


class InsufficientLights(PhotometricError, ValueError):
    pass


class DegenerateLighting(PhotometricError, ValueError):
    pass


class MissingData(PhotometricError, FileNotFoundError):
    pass


class IncompatibleCheckpoint(PhotometricError, ValueError):
    pass


class CorruptCheckpoint(PhotometricError, ValueError):
    pass
