"""Exception hierarchy shared by every module."""


class BvMError(Exception):
    """Base class for all library errors."""


class NotPositiveDefinite(BvMError, ValueError):
    pass


class NoConvergence(BvMError, RuntimeError):
    pass


class DimensionMismatch(BvMError, ValueError):
    pass


class EmptyData(BvMError, ValueError):
    pass


class DegreesOfFreedomTooSmall(BvMError, ValueError):
    pass


class BadInit(BvMError, ValueError):
    pass


class NonFiniteLikelihood(BvMError, ValueError):
    pass


class PerturbationTooLarge(BvMError, ValueError):
    pass


class SingularSample(BvMError, ValueError):
    """The sample covariance cannot be inverted (typically n <= p)."""


class ZeroEigengap(BvMError, ValueError):
    pass


class NonPositiveVariance(BvMError, ValueError):
    pass


class OrderTooHigh(BvMError, ValueError):
    pass


class CovarianceMismatch(BvMError, ValueError):
    pass


class EmptySamples(BvMError, ValueError):
    pass


class ConfigParse(BvMError, ValueError):
    """Invalid experiment configuration.

    ``field`` is a dotted path to the offending entry (``"alpha"``,
    ``"functional.i"``, ``"y.n"``); ``line`` is set for JSON syntax errors.
    """

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line

    def record(self):
        return {
            "error": type(self).__name__,
            "field": self.field,
            "line": self.line,
            "message": str(self),
        }
