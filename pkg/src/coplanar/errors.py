"""Exception types raised across the package."""


class CoplanarError(Exception):
    """Base class; the CLI maps these to a data-error exit code."""


class GeometryError(CoplanarError):
    pass


class MapsToInfinity(GeometryError):
    pass


class SideViolation(GeometryError):
    pass


class DegenerateSample(GeometryError):
    pass


class DegenerateCorrespondences(GeometryError):
    pass


class MissingPattern(CoplanarError):
    pass


class MissingGmm(CoplanarError):
    pass


class InfeasibleMove(CoplanarError):
    pass


class DegenerateInput(CoplanarError):
    pass


class InsufficientData(CoplanarError):
    pass


class SpecInfeasible(CoplanarError):
    pass


class TooLarge(CoplanarError):
    pass


class FormatError(CoplanarError):
    """Malformed input file. ``where`` locates the offending line or field."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)
