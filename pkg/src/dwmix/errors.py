"""Exception hierarchy shared by every module of the package."""


class DwmixError(Exception):
    """Base class for all package errors."""


class ValidationError(DwmixError, ValueError):
    """Input violates a structural invariant (bad table, bad weights...)."""


class ShapeMismatch(ValidationError):
    pass


class ZeroMarginal(DwmixError, ValueError):
    """The conditional D(.|x) is undefined because D(x) = 0."""


class SupportViolation(DwmixError, ValueError):
    """A ratio D/D' is infinite: D has mass where D' has none."""


class NonpositiveProbability(DwmixError, ValueError):
    """Cross-entropy evaluated where the predicted probability is <= 0."""


class NonpositiveEta(DwmixError, ValueError):
    pass


class DegenerateNormalizer(DwmixError, ValueError):
    """Every output of the combined predictor vanishes at some input."""


class NonpositiveJz(DwmixError, ValueError):
    """The numerator J_z vanishes at a point that carries positive weight."""


class SolverError(DwmixError, RuntimeError):
    pass


class InnerStall(SolverError):
    """The convex subproblem produced no improving point."""


class NoConvergence(SolverError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class GridTooLarge(DwmixError, ValueError):
    pass


class InfeasibleProbe(DwmixError, ValueError):
    """A finite-difference probe leaves the simplex."""


class EmptySample(DwmixError, ValueError):
    pass
