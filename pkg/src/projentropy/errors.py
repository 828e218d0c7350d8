"""Exception types shared across the package."""


class ProjEntropyError(Exception):
    """Base class for all library errors."""


class DegenerateTuple(ProjEntropyError):
    """A projective configuration coincides in a forbidden way."""


class OutOfChart(ProjEntropyError):
    """A point falls on the excluded direction of a chart."""


class AtInfinity(ProjEntropyError):
    """A fractional-linear denominator vanishes."""


class NotProjective(ProjEntropyError):
    def __init__(self, residual: float, message: str = ""):
        self.residual = residual
        super().__init__(message or f"map is not projective (residual {residual:.3e})")


class DomainError(ProjEntropyError):
    def __init__(self, subexpr, message: str = ""):
        self.subexpr = subexpr
        super().__init__(message or f"domain violation in {subexpr}")


class UnboundVariable(ProjEntropyError, NameError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound variable {name!r}")


class QuadratureFailure(ProjEntropyError):
    pass


class ZeroMass(ProjEntropyError):
    pass


class CaseViolation(ProjEntropyError):
    pass


class AxiomFailure(ProjEntropyError):
    pass


class NotInKernel(ProjEntropyError):
    pass


class SingularJacobian(ProjEntropyError):
    pass


class LeftDomain(ProjEntropyError):
    pass


class TransversalityFailed(ProjEntropyError):
    """The first characteristic component X^1 vanishes somewhere on the grid."""


class MonotonicityFailed(ProjEntropyError):
    """The slope X^2/X^1 is not strictly monotone in the fiber variable."""


class AtVanishingPoint(ProjEntropyError):
    pass


class InShockSet(ProjEntropyError):
    def __init__(self, one_sided, message: str = "point lies on a shock arc"):
        self.one_sided = one_sided
        super().__init__(message)


class ConstraintViolation(ProjEntropyError):
    pass


class SamplingTooCoarse(ProjEntropyError):
    pass
