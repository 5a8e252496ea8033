"""Exception types shared across the package."""


class NLRLError(Exception):
    pass


class ArityError(NLRLError, ValueError):
    """A formula references a variable beyond the supplied assignment."""


class DomainError(NLRLError, ValueError):
    """An input lies outside the unit interval."""


class ResourceError(NLRLError, ValueError):
    """An exhaustive enumeration would exceed its size bound."""


class ShapeError(NLRLError, ValueError):
    pass


class CapacityError(NLRLError, ValueError):
    """A formula does not fit the width/depth of a network."""


class FormulaSyntaxError(NLRLError, ValueError):
    pass


class DivergenceError(NLRLError, ArithmeticError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, last_finite_epoch=None):
        super().__init__(message)
        self.last_finite_epoch = last_finite_epoch
