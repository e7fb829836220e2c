"""Exception types shared across the package."""


class NzkError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(NzkError):
    """A spec, config file, or argument combination is invalid."""


class MomentError(NzkError):
    """A requested closed-form moment does not exist for the distribution."""


class UnsupportedError(NzkError):
    """The operation's preconditions exclude this input (by design)."""


class ShapeMismatchError(NzkError):
    """Array dimensions do not agree with the model or dataset."""


class DivergenceError(NzkError):
    """Training produced a non-finite or runaway loss.

    Carries the step index at which the divergence was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DataFormatError(NzkError):
    """A data file failed to parse; carries the offending location."""

    def __init__(self, message, offset=None, line=None):
        super().__init__(message)
        self.offset = offset
        self.line = line


class ContractError(NzkError):
    """An internal numerical contract was violated (e.g. asymmetric input)."""
