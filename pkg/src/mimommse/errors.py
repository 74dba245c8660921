"""Exception hierarchy shared by every module of the package."""


class MimoMmseError(Exception):
    """Base class for all errors raised by mimommse."""


class DimensionError(MimoMmseError, ValueError):
    pass


class NumericalError(MimoMmseError, ArithmeticError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class DefinitenessError(MimoMmseError, ArithmeticError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, pivot):
        super().__init__(f"matrix is not positive definite (pivot {pivot})")
        self.pivot = pivot


class DomainError(MimoMmseError, ValueError):
    pass


class ConvergenceError(MimoMmseError, ArithmeticError):
    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (residual={residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class StabilityError(MimoMmseError, ArithmeticError):
    """The margin 1 - sigma^4 gamma gamma_tilde is not positive."""


class ConstraintError(MimoMmseError, ValueError):
    """A precoder violates the power constraint."""


class RankDeficiencyError(MimoMmseError, ValueError):
    pass


class DegeneratePointError(MimoMmseError, ArithmeticError):
    pass
