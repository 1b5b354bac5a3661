"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures to the
documented process exit codes without a lookup table of its own.
"""

from __future__ import annotations

from typing import Any, Sequence


class ShmError(Exception):
    exit_code = 2


class ParseError(ShmError):
    """Malformed input record. ``location`` is a line number or byte offset."""

    def __init__(self, message: str, location: int | None = None):
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)
        self.location = location


class ValidationError(ShmError):
    pass


class ParameterError(ShmError, ValueError):
    pass


class EmptyOutputError(ShmError):
    pass


class UndefinedInputError(ShmError, ValueError):
    pass


class DegenerateInputError(ShmError):
    pass


class DimensionError(ShmError, ValueError):
    exit_code = 5


class InsufficientDataError(ShmError):
    exit_code = 3


class BlockSizeError(ShmError, ValueError):
    pass


class CalibrationError(ShmError):
    """Energy-threshold search failed; ``trajectory`` holds every evaluated step."""

    exit_code = 3

    def __init__(self, message: str, trajectory: Sequence[Any] = ()):
        super().__init__(message)
        self.trajectory = tuple(trajectory)


class TrainingError(ShmError):
    exit_code = 4

    def __init__(self, message: str, trajectory: Sequence[float] = ()):
        super().__init__(message)
        self.trajectory = tuple(trajectory)


class FormatError(ShmError):
    pass


class VersionMismatchError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


class PayloadError(ShmError, ValueError):
    pass


class TraceTooShortError(ShmError):
    pass
