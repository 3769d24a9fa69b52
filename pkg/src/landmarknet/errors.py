"""Exception types raised across the toolkit."""


class LandmarkNetError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(LandmarkNetError, ValueError):
    pass


class InvalidShapeError(ShapeError):
    pass


class InvalidGeometryError(ShapeError):
    pass


class InvalidArchitectureError(LandmarkNetError, ValueError):
    pass


class ConsistencyError(LandmarkNetError, ValueError):
    pass


class MissingWeightsError(LandmarkNetError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing weights"


class DivergenceError(LandmarkNetError, RuntimeError):
    """Training produced a non-finite or exploding loss."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class InfeasibleAugmentationError(LandmarkNetError, ValueError):
    pass


class FormatError(LandmarkNetError, ValueError):
    pass


class ParseError(FormatError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(LandmarkNetError, ValueError):
    pass


class SizeError(LandmarkNetError, ValueError):
    pass


class EvaluationError(LandmarkNetError, ValueError):
    pass


class DegenerateGeometryError(LandmarkNetError, ValueError):
    pass


class ProjectionError(LandmarkNetError, ValueError):
    pass
