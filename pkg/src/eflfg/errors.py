"""Exception hierarchy shared by every module of the package."""


class EflFgError(Exception):
    """Base class for all package errors."""


class InvalidInputError(EflFgError, ValueError):
    pass


class ParseError(EflFgError, ValueError):
    """A data file could not be parsed; the message names row and column."""


class SizingError(EflFgError, ValueError):
    pass


class ConfigError(EflFgError, ValueError):
    """An experiment configuration key is missing, unknown or out of range."""


class NumericStateError(EflFgError, ArithmeticError):
    pass


class TrainingError(EflFgError, RuntimeError):
    pass


class ContractViolation(EflFgError, RuntimeError):
    """A caller broke an operation's precondition."""


class BandwidthInfeasibleError(EflFgError, RuntimeError):
    """The uplink bandwidth cannot carry even a single client's losses."""


class DiagnosticUnavailableError(EflFgError, RuntimeError):
    pass


class InvariantViolation(EflFgError, AssertionError):
    """A runtime invariant checked inline during simulation failed."""
