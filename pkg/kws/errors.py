"""Exception hierarchy shared by the library and the command line.

Every exception carries ``exit_code`` so ``scripts.kws.cli`` can map a failure
to the process status without inspecting messages.
"""

from __future__ import annotations

from typing import Optional


class KwsError(Exception):
    exit_code = 1


class ArgumentError(KwsError, ValueError):
    """Invalid argument or flag combination."""

    exit_code = 1


class StorageError(KwsError, OSError):
    """Unreadable directory, unwritable output, missing file."""

    exit_code = 2


class DataError(KwsError, ValueError):
    exit_code = 3


class DecodeError(DataError):
    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(DecodeError):
    pass


class EmptyAudioError(DecodeError):
    pass


class ShapeError(DataError):
    pass


class ValidationError(DataError):
    """A single malformed input row; collected rather than raised by bulk loaders."""

    def __init__(self, message: str, row: Optional[int] = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DuplicateKeywordError(ArgumentError):
    pass


class EmptyManifestError(DataError):
    pass


class InfeasibleSplitError(DataError):
    pass


class CheckpointError(DataError):
    pass


class IncompatibleCheckpointError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(KwsError, ArithmeticError):
    """NaN/Inf in a loss, gradient or activation."""

    exit_code = 4

    def __init__(
        self,
        message: str,
        parameter: Optional[str] = None,
        epoch: Optional[int] = None,
    ):
        if parameter is not None:
            message = f"{message} [parameter {parameter}]"
        if epoch is not None:
            message = f"{message} [epoch {epoch}]"
        super().__init__(message)
        self.parameter = parameter
        self.epoch = epoch
