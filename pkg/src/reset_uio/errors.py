"""Exception hierarchy shared by every module of the package."""


class ResetUIOError(Exception):
    """Base class for all package errors."""


class SingularMatrix(ResetUIOError):
    pass


class RankDeficient(ResetUIOError):
    pass


class NoConvergence(ResetUIOError):
    pass


class DimensionMismatch(ResetUIOError, ValueError):
    pass


class RankCondition(ResetUIOError):
    """rank(CD) != rank(D): no unknown input observer exists for the plant."""


class NotStabilizing(ResetUIOError):
    """The supplied gain K does not make N = MA - KC Hurwitz."""


class Infeasible(ResetUIOError):
    """No reset certificate was found at the requested scalar triple.

    ``no_convergence`` is set when the iteration budget ran out rather than
    the iterate stalling, which only makes the verdict weaker.
    """

    def __init__(self, message: str, residual: float = float("nan"), no_convergence: bool = False):
        super().__init__(message)
        self.residual = residual
        self.no_convergence = no_convergence


class ConfigInvalid(ResetUIOError, ValueError):
    pass


class NonFinite(ResetUIOError, ArithmeticError):
    pass
