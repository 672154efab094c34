"""Meta-learned causal effect estimation on simulated structural causal models."""

from .errors import (CausalMetaError, ConfigError, ContractError, DegenerateError, DivergenceError,
                     NumericError, ParameterError, RankDeficiencyError)

__version__ = "0.1.0"

__all__ = ["CausalMetaError", "ConfigError", "ContractError", "DegenerateError", "DivergenceError",
           "NumericError", "ParameterError", "RankDeficiencyError", "__version__"]
