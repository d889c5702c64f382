"""Shared exception types."""


class ContractError(ValueError):
    """An argument violated an operation's contract (shape/range/state)."""


class ConfigError(ValueError):
    """Invalid configuration (bad partition, inconsistent dims, ...)."""


class HistoryUnderflowError(RuntimeError):
    """Not enough buffered history to build a model input."""


class DegenerateInputError(ValueError):
    """Input is numerically degenerate (e.g. zero-variance differences)."""


class DecodeError(ValueError):
    """A serialized record could not be decoded."""
