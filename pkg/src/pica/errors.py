"""Exception hierarchy shared by every module."""


class PicaError(Exception):
    """Base class for all errors raised by the package."""


class ParameterError(PicaError, ValueError):
    """An argument violates an operation's precondition."""


class IngestionError(PicaError):
    """Input files are individually valid but inconsistent with each other."""


class WavFormatError(PicaError):
    """A file is not a readable mono PCM16 / float32 WAV."""


class DegenerateInputError(PicaError, ValueError):
    """Data is rank deficient or has a silent (zero variance) row."""


class NumericError(PicaError, ArithmeticError):
    """Non-finite values or a singular matrix during iteration.

    ``hop`` is set when the error was raised inside a forwarding chain.
    """

    def __init__(self, message, hop=None):
        if hop is not None:
            message = f"hop {hop}: {message}"
        super().__init__(message)
        self.hop = hop


class ContractError(PicaError):
    """An operation was called outside the regime it is defined for."""


class CsvSchemaError(PicaError):
    """A results CSV does not follow the documented schema."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
