"""Exception hierarchy shared by every infogate module."""

from typing import Optional, Sequence


class InfoGateError(Exception):
    """Base class for all infogate errors."""


class ValidationError(InfoGateError, ValueError):
    """Invalid configuration, argument or input file."""


class ShapeError(ValidationError):
    """Operand shapes are incompatible for the requested operation."""

    def __init__(self, op: str, *shapes: Sequence[int], detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        shown = " vs ".join(str(s) for s in self.shapes)
        message = f"{op}: incompatible shapes {shown}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class NumericalAbort(InfoGateError):
    """A loss or gradient became non-finite; training stops."""

    def __init__(self, message: str, last_good_step: Optional[int] = None):
        self.last_good_step = last_good_step
        if last_good_step is not None:
            message = f"{message} (last good step: {last_good_step})"
        super().__init__(message)


class DatasetFormatError(InfoGateError):
    """A binary container could not be decoded."""


class BadMagicError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class VersionMismatchError(DatasetFormatError):
    pass


class GradientCheckError(InfoGateError):
    """A finite-difference or analytic gradient estimate was NaN."""
