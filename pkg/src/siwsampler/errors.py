"""Exception hierarchy shared by every module."""


class SIWError(Exception):
    """Base class for all errors raised by :mod:`siwsampler`."""


class ParameterError(SIWError, ValueError):
    """An argument violates a documented precondition."""


class EmptyInputError(ParameterError):
    pass


class ShapeError(ParameterError):
    pass


class MomentNonexistenceError(ParameterError):
    """The requested moment or test-function integral does not exist for this nu."""


class NumericalError(SIWError, ArithmeticError):
    """A non-finite or otherwise invalid intermediate value was produced."""


class ConditioningError(NumericalError):
    pass
