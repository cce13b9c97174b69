"""Exception and warning types raised across the package."""


class MixIdError(Exception):
    """Base class for domain errors; the CLI maps these to exit code 1."""

    stage = None

    def with_stage(self, stage):
        self.stage = stage
        return self


class DimensionMismatch(MixIdError, ValueError):
    pass


class NonPositiveWeight(MixIdError, ValueError):
    pass


class DegenerateCovariance(MixIdError, ValueError):
    pass


class RegionCapExceeded(MixIdError):
    pass


class UnsupportedActivation(MixIdError, ValueError):
    pass


class NotGenericPoint(MixIdError):
    pass


class NotConditionallyFactorial(MixIdError):
    pass


class NoValidPair(MixIdError):
    pass


class AssumptionViolated(MixIdError):
    pass


class RepeatedSingularValues(MixIdError):
    pass


class TooManyComponents(MixIdError):
    pass


class SingularCovariance(MixIdError):
    pass


class ZeroVarianceCoordinate(MixIdError):
    pass


class ParseError(MixIdError):
    pass


class InconsistentDimensions(MixIdError):
    pass


class GridTooLarge(MixIdError):
    pass


class PrerequisiteViolated(MixIdError):
    pass


class RankDeficientMeans(UserWarning):
    """Means are affinely dependent; the fitted map is the minimum-norm one."""


class NumericalUnderflow(RuntimeWarning):
    """A density fell below the log floor and was clamped."""
