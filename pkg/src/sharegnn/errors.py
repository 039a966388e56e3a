"""Exception hierarchy shared by the library and the CLI.

Each error class carries the process exit code the CLI reports for it.
"""


class ShareGNNError(Exception):
    exit_code = 1


class ConfigError(ShareGNNError):
    """Invalid or unsatisfiable configuration."""

    exit_code = 2


class DataError(ShareGNNError):
    """Unreadable or malformed input data."""

    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NumericFault(ShareGNNError):
    """NaN or Inf encountered in a forward or backward pass."""

    exit_code = 4


class ContractViolation(ValueError):
    """A caller broke a documented precondition (shape, size, index range)."""
