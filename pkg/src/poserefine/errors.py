"""Exception types shared across the package."""


class PoseRefineError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(PoseRefineError, ValueError):
    """An array argument has the wrong shape or dtype-incompatible content."""


class DegenerateLimbError(PoseRefineError, ValueError):
    """A limb is unusable: coincident endpoints, zero length, or no valid frames."""


class InsufficientDataError(PoseRefineError, ValueError):
    """Too few frames or samples for the requested operation."""


class DegenerateSamplingError(PoseRefineError, ValueError):
    """Sample locations leave a least-squares system rank deficient."""


class InvalidRangeError(PoseRefineError, ValueError):
    """A randomization or noise range is empty, inverted, or otherwise unusable."""


class SchemaError(PoseRefineError, ValueError):
    """A keypoint, manifest, or config file does not match the expected layout."""


class ModelFormatError(PoseRefineError, ValueError):
    """A model file has the wrong magic or an unsupported version."""


class CorruptModelError(ModelFormatError):
    """A model file parses but its tensor table is truncated or inconsistent."""


class TrainingDivergedError(PoseRefineError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class GenerationError(PoseRefineError, RuntimeError):
    """Dataset generation could not produce the requested records."""
