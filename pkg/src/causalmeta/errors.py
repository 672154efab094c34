"""Exception hierarchy shared across the package."""


class CausalMetaError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(CausalMetaError, ValueError):
    """An argument is outside its documented domain."""


class ContractError(CausalMetaError, ValueError):
    """Inputs do not match the layout an operation expects."""


class NumericError(CausalMetaError, ArithmeticError):
    """A computation produced non-finite values."""


class GraphError(CausalMetaError, RuntimeError):
    """Backward was asked about something the tape never recorded."""


class DivergenceError(NumericError):
    """Training loss stayed non-finite; carries the curve recorded so far."""

    def __init__(self, message: str, curve=None):
        super().__init__(message)
        self.curve = list(curve or [])


class DegenerateError(CausalMetaError, ValueError):
    """A quantity needed for an estimate is (numerically) constant."""


class RankDeficiencyError(DegenerateError):
    """Normal equations are singular."""


class ConfigError(CausalMetaError, ValueError):
    """Configuration file or flag is invalid."""
