"""Exception hierarchy shared by all samplers and simulators."""


class SamplingError(Exception):
    """Base class for every error raised by this package."""


class MalformedTarget(SamplingError, ValueError):
    """Target sums are inconsistent, negative, or in the wrong regime."""


class DegenerateTarget(MalformedTarget):
    """Target has zero total mass."""


class NotEnclosing(MalformedTarget):
    """Acceptance-rejection proposal does not enclose the target."""


class NonTermination(SamplingError, RuntimeError):
    """A rejection loop exceeded its cycle cap."""


class UnsupportedSize(SamplingError, ValueError):
    pass


class AllZeroWeights(SamplingError, ValueError):
    pass


class IndexOutOfRange(SamplingError, IndexError):
    pass


class NegativeWeight(SamplingError, ValueError):
    pass


class InconsistentWeights(SamplingError, RuntimeError):
    """Sampler weights no longer mirror the simulator state."""


class InvalidParams(SamplingError, ValueError):
    pass


class ExhaustedSystem(SamplingError, RuntimeError):
    """Total propensity is zero: no reaction can fire."""


class NegativeCount(SamplingError, RuntimeError):
    """Firing a reaction would drive a species count below zero."""
