"""Exception hierarchy shared by every module of the package."""


class AnnotatorError(Exception):
    """Base class for all errors raised by gesture_annotator."""


class StreamError(AnnotatorError, ValueError):
    """A FrameStream violates one of its invariants."""


class RaggedFrames(StreamError):
    pass


class EmptyStream(StreamError):
    pass


class OverlappingSpans(StreamError):
    pass


class SpanOutOfRange(StreamError):
    pass


class InvalidStep(AnnotatorError, ValueError):
    pass


class DimensionMismatch(AnnotatorError, ValueError):
    pass


class TargetTooLong(AnnotatorError, ValueError):
    """The label sequence cannot be aligned to the available frames."""


# Alias used by the training loop, where the condition is per window.
InfeasibleTarget = TargetTooLong


class TooLargeForOracle(AnnotatorError, ValueError):
    pass


class StaleCache(AnnotatorError, RuntimeError):
    """A forward cache was used after the parameters changed."""


class NoLabeledData(AnnotatorError, ValueError):
    pass


class CoverageGap(AnnotatorError, ValueError):
    pass


class Unsorted(AnnotatorError, ValueError):
    pass


class EmptyTruth(AnnotatorError, ValueError):
    pass


class NucleusOutsideSpan(AnnotatorError, ValueError):
    pass
