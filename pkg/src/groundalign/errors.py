"""Exception hierarchy. Every error raised by the library derives from GroundAlignError."""


class GroundAlignError(Exception):
    pass


class ValidationError(GroundAlignError):
    pass


class CyclicParse(ValidationError):
    pass


class MultipleRoots(ValidationError):
    pass


class DanglingHead(ValidationError):
    pass


class BadEdgeIndex(ValidationError):
    pass


class BadRootIndex(ValidationError):
    pass


class BadLabel(ValidationError):
    pass


class BrokenChain(ValidationError):
    pass


class NonMonotoneAlignment(ValidationError):
    pass


class IndexOutOfRange(ValidationError):
    pass


class CoordinateOutOfRange(GroundAlignError):
    pass


class FrozenIndexMiss(GroundAlignError):
    pass


class DegenerateScore(GroundAlignError):
    pass


class TooLarge(GroundAlignError):
    pass


class EmptyMatrix(GroundAlignError):
    pass


class NoSuccessors(GroundAlignError):
    pass


class LineSearchFailure(GroundAlignError, RuntimeWarning):
    """Issued as a warning: the optimizer still returns its best iterate."""


class NoPathFound(GroundAlignError):
    pass


class IllegalTransition(GroundAlignError):
    pass


class GenerationFailure(GroundAlignError):
    pass


class ChecksumMismatch(GroundAlignError):
    pass


class UnknownVersion(GroundAlignError):
    pass


class IdMismatch(GroundAlignError):
    pass
