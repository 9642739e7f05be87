"""Exception types raised by the numerical routines."""


class DomainError(ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class UnsupportedOperation(ValueError):
    """The operation is not defined for the requested exponent."""


class QuadratureError(ArithmeticError):
    """An integrand produced a non-finite value at a quadrature node."""

    def __init__(self, message, b=None, z=None):
        super().__init__(message)
        self.b = b
        self.z = z


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BracketError(ConvergenceError):
    """A root or minimum could not be bracketed."""


class NoSolutionError(ConvergenceError):
    """A fixed-point equation has no solution in the searched range."""


class DivergenceError(ConvergenceError):
    """An iteration blew up."""
