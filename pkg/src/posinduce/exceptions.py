"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`PosInduceError`.  The ``exit_code`` attribute is what the command
line front end returns when the error escapes a subcommand.
"""


class PosInduceError(Exception):
    exit_code = 2


class ConfigError(PosInduceError, ValueError):
    """Invalid run configuration or command line usage."""

    exit_code = 1


class DataError(PosInduceError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class ParseError(DataError):
    """A file could not be parsed.  ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyCorpusError(DataError):
    pass


class EmptyTableError(DataError):
    pass


class TruncatedFileError(ParseError):
    pass


class NumericalError(PosInduceError, ArithmeticError):
    """NaN objectives, degenerate lattices and similar failures."""

    exit_code = 3


class DegenerateLatticeError(NumericalError):
    pass


class ModelFormatError(DataError):
    """A serialized model is unreadable or has the wrong format version."""
