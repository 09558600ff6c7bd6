"""Exception types raised across the package."""


class IscPomdpError(Exception):
    """Base class for all package errors."""


class ImpossibleObservation(IscPomdpError, ValueError):
    """An observation has (numerically) zero probability under the belief."""


class OutOfRange(IscPomdpError, IndexError):
    pass


class InvalidModel(IscPomdpError, ValueError):
    pass


class InvalidSpec(IscPomdpError, ValueError):
    pass


class UnsupportedGrid(IscPomdpError, ValueError):
    pass


class EmptyBasePoints(IscPomdpError, ValueError):
    pass


class BudgetTooSmall(IscPomdpError, RuntimeError):
    pass


class TreeTooLarge(IscPomdpError, RuntimeError):
    pass


class DimensionMismatch(IscPomdpError, ValueError):
    pass


class ConfigMismatch(IscPomdpError, ValueError):
    pass
