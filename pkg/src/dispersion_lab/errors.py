"""Exception hierarchy shared by all modules."""


class DispersionLabError(Exception):
    """Base class for every error raised by the package."""


class ConjugateConflict(DispersionLabError):
    pass


class OutOfBand(DispersionLabError):
    pass


class NotReal(DispersionLabError):
    pass


class ParseError(DispersionLabError):
    pass


class DegreeTooLow(DispersionLabError):
    pass


class JetOverflow(DispersionLabError):
    pass


class NotZeroSum(DispersionLabError):
    pass


class ArityMismatch(DispersionLabError):
    pass


class BudgetExceeded(DispersionLabError):
    pass


class InternalResonanceHit(DispersionLabError):
    """A resonance Phi = 0 was met inside the support of a normal-form multiplier."""


class CalibrationFailed(DispersionLabError):
    pass


class DegenerateTrajectory(DispersionLabError):
    pass


class BackwardHeat(DispersionLabError):
    """Negative time requested for a regularized (eps > 0) flow."""


class NonFinite(DispersionLabError):
    pass


class NoContraction(DispersionLabError):
    pass


class MaxIter(DispersionLabError):
    pass


class UnknownPreset(DispersionLabError):
    pass


class ConfigError(DispersionLabError):
    pass
