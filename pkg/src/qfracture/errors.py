"""Exception hierarchy shared by every stage of the pipeline."""


class QFractureError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(QFractureError, ValueError):
    pass


class DataError(QFractureError, ValueError):
    pass


class DegenerateDataError(DataError):
    """Data is well-formed but cannot support the requested fit (e.g. one class)."""


class DimensionError(QFractureError, ValueError):
    pass


class NormalizationError(QFractureError, ValueError):
    pass


class CapacityError(QFractureError, ValueError):
    pass


class QubitIndexError(QFractureError, IndexError):
    pass


class DuplicateQubitError(QFractureError, ValueError):
    pass


class RankError(QFractureError, ValueError):
    pass


class IngestError(DataError):
    pass


class FormatError(QFractureError, ValueError):
    pass


class VersionError(FormatError):
    pass


class PipelineError(QFractureError):
    """A pipeline stage failed; carries the stage name and the original cause."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
