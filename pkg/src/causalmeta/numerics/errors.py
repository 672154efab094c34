from ..errors import GraphError, NumericError, ParameterError

__all__ = ["GraphError", "NumericError", "ParameterError"]
