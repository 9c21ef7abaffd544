"""Exception hierarchy shared by every service.

Each error carries the process exit code the CLI uses when it escapes a command:
0 ok, 2 config/usage error, 3 data/format error, 4 numeric failure.
"""


class ContlexError(Exception):
    """Base class for all pipeline errors."""
    exit_code = 1


class ConfigError(ContlexError):
    """Invalid configuration value or combination."""
    exit_code = 2


class UsageError(ContlexError):
    """An API or command was called in a way it does not support."""
    exit_code = 2


class MissingArtifactError(ContlexError):
    """An upstream artifact is absent or does not match the manifest."""
    exit_code = 2

    def __init__(self, path, reason: str = "missing"):
        self.path = path
        super().__init__(f"{reason}: {path}")


class DataFormatError(ContlexError):
    """Malformed input file (wrong header, bad row, truncated blob, version mismatch)."""
    exit_code = 3


class DataError(ContlexError):
    """Well-formed input whose content violates a data invariant."""
    exit_code = 3


class PreconditionError(ContlexError):
    """Input does not satisfy an operation's precondition."""
    exit_code = 3


class InputError(ContlexError):
    """Invalid model input (e.g. a batch row made only of padding)."""
    exit_code = 3


class DimensionError(ContlexError, ValueError):
    """Tensor shapes are incompatible."""
    exit_code = 3


class LabelLookupError(ContlexError, KeyError):
    """A label was not seen when the encoder was fitted."""
    exit_code = 3

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class LabelIndexError(ContlexError, IndexError):
    """A class id is outside the valid range."""
    exit_code = 3


class NumericError(ContlexError):
    """Non-finite values appeared, or a gradient check failed."""
    exit_code = 4
