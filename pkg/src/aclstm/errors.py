"""Exception hierarchy.  ``exit_code`` is the CLI contract (2 config, 3 numeric, 4 I/O)."""


class ArtifactError(Exception):
    exit_code = 1


class ConfigError(ArtifactError, ValueError):
    exit_code = 2


class DomainError(ArtifactError, ValueError):
    """Input outside the mathematical domain of an operation (e.g. zero energy)."""

    exit_code = 3


class NumericError(ArtifactError, ArithmeticError):
    exit_code = 3


class TrainingDiverged(NumericError):
    def __init__(self, message, params=None, history=None):
        super().__init__(message)
        self.params = params
        self.history = history


class FileFormatError(ArtifactError, OSError):
    exit_code = 4
    code = "io"


class BadMagicError(FileFormatError):
    code = "bad_magic"


class BadVersionError(FileFormatError):
    code = "bad_version"


class LengthMismatchError(FileFormatError):
    code = "length_mismatch"


class UnreadableFileError(FileFormatError):
    code = "unreadable"


class ShapeMismatchError(FileFormatError):
    code = "shape_mismatch"
