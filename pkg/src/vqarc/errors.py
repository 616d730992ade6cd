"""Exception types shared across the package.

Each class carries a short ``category`` string; the command line prints it as
the machine-parsable prefix of its one-line error message.
"""


class VQARCError(Exception):
    category = "error"


class DimensionError(VQARCError, ValueError):
    category = "dimension"


class InvalidMaskError(VQARCError, ValueError):
    category = "mask"


class ConfigError(VQARCError, ValueError):
    category = "config"


class ContractError(VQARCError, ValueError):
    category = "contract"


class OracleError(VQARCError, ArithmeticError):
    category = "oracle"


class EmptyContextError(VQARCError, ValueError):
    category = "empty_context"


class DataError(VQARCError, ValueError):
    category = "data"


class ParseError(DataError):
    category = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingError(VQARCError, RuntimeError):
    category = "training"


class UsageError(VQARCError, ValueError):
    category = "usage"
