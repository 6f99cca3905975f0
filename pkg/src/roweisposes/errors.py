"""Exception hierarchy.

Every exception carries an ``exit_code`` used by the command-line tool:
1 for configuration/validation problems, 2 for data problems and 3 for
numerical failures.
"""


class RoweisposesError(Exception):
    exit_code = 1


class ConfigError(RoweisposesError, ValueError):
    """Invalid configuration or hyperparameter."""

    exit_code = 1


class InvalidDimensionError(RoweisposesError, ValueError):
    exit_code = 1


class ProtocolError(RoweisposesError):
    """The evaluation protocol cannot be run on the given data."""

    exit_code = 1


class DataError(RoweisposesError, ValueError):
    exit_code = 2


class SchemaError(DataError):
    """Data does not match the dataset schema (joint counts, indices)."""


class ParseError(DataError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class DegenerateSkeletonError(DataError):
    """A frame cannot be normalized (zero scale, coincident shoulders)."""

    def __init__(self, message, frame_index=None):
        self.frame_index = frame_index
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)


class NumericalError(RoweisposesError, ArithmeticError):
    exit_code = 3


class IndefiniteConstraintError(NumericalError):
    """The constraint matrix of a generalized eigenproblem is not positive definite."""

    def __init__(self, pivot_index, pivot_value):
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        super().__init__(
            f"constraint matrix is not positive definite: pivot {pivot_index} "
            f"has value {pivot_value:.6g}"
        )


class FitError(NumericalError):
    pass
