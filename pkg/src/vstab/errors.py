"""Exception hierarchy shared by every vstab module."""


class VstabError(Exception):
    """Base class for all errors raised by vstab."""


class BadParameter(VstabError, ValueError):
    pass


class NotHermitian(VstabError, ValueError):
    pass


class NotPSD(VstabError, ValueError):
    pass


class NotNormal(VstabError, ValueError):
    pass


class NotOrthonormal(VstabError, ValueError):
    pass


class SingularOperator(VstabError, ValueError):
    pass


class NoConvergence(VstabError, RuntimeError):
    """An iterative procedure hit its iteration budget.

    The residual trace and the last iterate are attached so callers can
    report how far the iteration got.
    """

    def __init__(self, message, *, t=None, iterations=0, residual=float("nan"),
                 trace=None, partial=None):
        super().__init__(message)
        self.t = t
        self.iterations = iterations
        self.residual = residual
        self.trace = trace
        self.partial = partial


class BracketMismatch(VstabError, RuntimeError):
    pass


class InsufficientSamples(VstabError, ValueError):
    pass


class NeumannOverflow(VstabError, OverflowError):
    def __init__(self, message, *, n_reached=0):
        super().__init__(message)
        self.n_reached = n_reached


class RankDeficit(VstabError, RuntimeError):
    pass


class ZeroRange(VstabError, ValueError):
    pass


class GapTooSmall(VstabError, ValueError):
    pass


class InconsistentVerdict(VstabError, RuntimeError):
    def __init__(self, message, *, evidence=None):
        super().__init__(message)
        self.evidence = evidence or {}


class HorizonTooShort(VstabError, ValueError):
    pass


class MatrixMarketError(VstabError, ValueError):
    pass
