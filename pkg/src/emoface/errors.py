"""Exception types shared across the package.

Every error raised on a contract violation derives from EmofaceError so
callers can distinguish domain failures from programming mistakes.
"""


class EmofaceError(Exception):
    pass


class ContractError(EmofaceError):
    """An operation precondition was violated (shape, range, flag mismatch)."""


class DegenerateGeometryError(EmofaceError):
    """Input geometry has no valid solution (collinear, duplicate, zero-variance)."""


class FeatureFormatError(EmofaceError):
    """A feature file failed to parse. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CheckpointError(EmofaceError):
    pass


class CheckpointFormatError(CheckpointError):
    """Archive is corrupt or not a checkpoint at all."""


class CheckpointVersionError(CheckpointError):
    """Archive was written by an incompatible format version."""


class ConfigError(EmofaceError):
    """Config file failed to parse or contains invalid values."""


class BackendError(EmofaceError):
    """A pluggable backend (perceptual features, scorers) is unavailable or broken."""


class TrainingDivergedError(EmofaceError):
    """A training step produced non-finite values."""


class DatasetError(EmofaceError):
    """A dataset root is unusable (empty, malformed layout)."""


class PipelineStageError(EmofaceError):
    """A pipeline stage failed. Tags the failing stage for diagnostics."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
