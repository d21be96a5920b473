"""Exception types raised across the package."""


class CosparseError(Exception):
    """Base class for all errors raised by cosparse_admm."""


class InvalidDimensionError(CosparseError, ValueError):
    pass


class InvalidInputError(CosparseError, ValueError):
    pass


class InfeasibleCosupportError(CosparseError):
    """No rank-deficient cosupport of the requested size could be drawn."""


class NumericError(CosparseError, ArithmeticError):
    pass


class DivergenceError(NumericError):
    """An iterate picked up a non-finite entry."""


class ReferenceUnavailableError(CosparseError):
    pass


class InsufficientTraceError(CosparseError):
    pass


class ConfigError(CosparseError, ValueError):
    pass
