"""Exception and warning types raised across the package."""


class PartSegError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class EmptyMask(PartSegError, ValueError):
    pass


class EmptyInput(PartSegError, ValueError):
    pass


class MultiComponent(PartSegError, ValueError):
    pass


class DegenerateSegment(PartSegError, ValueError):
    pass


class OutOfBounds(PartSegError, IndexError):
    pass


class LengthMismatch(PartSegError, ValueError):
    pass


class DimensionMismatch(PartSegError, ValueError):
    pass


class NoValidCut(PartSegError):
    pass


class SplitFailed(PartSegError):
    pass


class DepthExceeded(PartSegError, RecursionError):
    pass


class VisibilityViolation(PartSegError, ValueError):
    pass


class PlacementFailure(PartSegError):
    pass


class NoGroundTruth(PartSegError, ValueError):
    pass


class SchemaError(PartSegError, ValueError):
    pass


class NoValidCutWarning(UserWarning):
    """A mask was emitted unsplit because no admissible cut existed."""


class OddPartCount(UserWarning):
    """Pairwise baseline saw an odd number of parts; one stays unmatched."""
