"""Exception hierarchy shared by every pipeline stage."""


class DropMatError(Exception):
    """Base class for all errors raised by dropmat."""


class InvalidInputError(DropMatError, ValueError):
    """Input data violates a documented invariant (non-finite values, bad shapes)."""


class InvalidConfigError(DropMatError, ValueError):
    """A configuration object holds out-of-range values."""


class SegmentationError(DropMatError):
    """Raised when the drop cannot be cut out of a trace.

    ``stage`` names the step that failed so callers can report it.
    """

    stage = "segmentation"


class SegmentTooShortError(SegmentationError):
    stage = "segment_too_short"


class NoWeightlessRegionError(SegmentationError):
    stage = "no_weightless_region"


class NoTouchdownError(SegmentationError):
    stage = "no_touchdown"


class NeverSettlesError(SegmentationError):
    stage = "never_settles"


class DegenerateSegmentError(DropMatError, ValueError):
    """Feature denominators vanish (e.g. an all-zero or constant cut)."""


class DegeneratePeakError(DegenerateSegmentError):
    """The reference peak width is zero or no peak was detected."""


class InvalidScenarioError(InvalidInputError):
    pass


class InvalidDatasetError(DropMatError, ValueError):
    pass


class FormatError(DropMatError, ValueError):
    """Malformed or incompatible file contents."""


class SchemaError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class ConcurrentWriteError(DropMatError, OSError):
    pass
