"""Exception types raised across the package."""


class ExactCPDError(Exception):
    """Base class for package errors."""


class ParameterError(ExactCPDError, ValueError):
    """A numeric argument lies outside its domain."""


class ConfigurationError(ExactCPDError, ValueError):
    """A test or scenario configuration cannot be used."""


class KindError(ExactCPDError, ValueError):
    """A series of the wrong kind (binary vs count) was supplied."""


class ParseError(ExactCPDError, ValueError):
    """An input file is malformed.

    ``row`` and ``column`` are 1-based positions in the file when known.
    """

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column
