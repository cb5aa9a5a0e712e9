"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Array shapes or counts are invalid or inconsistent."""


class ParameterError(ValueError):
    """A scalar parameter is outside its valid domain."""


class DivergedError(ArithmeticError):
    """A non-finite value appeared during an iteration.

    ``location`` identifies the offending entry, e.g. ``("gamma", i, a)``.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class NonContractiveError(ParameterError):
    """The asymptotic contraction factor is >= 1, so t* is meaningless."""


class UnsupportedDistributionError(ValueError):
    """The operation requires binary (+1/-1) signatures."""


class SingularSystemError(ArithmeticError):
    """The MMSE normal equations are singular."""


class ResourceLimitError(RuntimeError):
    """Requested dense computation exceeds the supported size."""
