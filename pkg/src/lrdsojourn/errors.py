"""Exception hierarchy shared by all modules."""


class SojournError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SojournError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class ParameterError(SojournError, ValueError):
    """A model or configuration carries invalid parameters."""


class MissingChordCDFError(SojournError):
    pass


class RankError(SojournError):
    """No Hermite coefficient exceeds the rank tolerance."""


class RegimeError(SojournError):
    """An asymptotic constant was requested outside the regime where it exists."""


class NotPSDError(SojournError):
    pass


class SizeCapError(SojournError):
    pass


class EmbeddingDefectError(SojournError):
    pass


class InadmissibleThresholdError(SojournError):
    pass


class ZeroDenominatorError(SojournError, ZeroDivisionError):
    pass


class TooFewSamplesError(SojournError, ValueError):
    pass


class PreconditionError(SojournError, ValueError):
    pass


class QuadratureWarning(UserWarning):
    """Adaptive quadrature hit its subdivision cap; the value is returned with a flag."""


class DivergentMeasureError(SojournError):
    """A spectral measure has infinite or undefined total mass."""


class TruncationWarning(UserWarning):
    """A truncated series leaves a tail larger than the requested tolerance."""
