"""Exception types shared across the package."""


class EgoReachError(Exception):
    """Base class for all package-specific errors."""


class DomainError(EgoReachError, ValueError):
    """A value violates a documented domain invariant."""


class DegenerateProjection(EgoReachError, ValueError):
    """Projection or back-projection requested at non-positive depth."""


class ShapeError(EgoReachError, ValueError):
    """Input does not match the configured shape or landmark count."""


class GenerationFailed(EgoReachError, RuntimeError):
    """Synthetic clip generation exhausted its retry budget."""


class SplitError(EgoReachError, ValueError):
    """Dataset cannot be partitioned with the requested ratios."""


class FormatError(EgoReachError, ValueError):
    """On-disk artifact is malformed; ``field`` names the offending part."""

    def __init__(self, field: str, message: str = ""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class TrainingDiverged(EgoReachError, RuntimeError):
    """Training loss became non-finite; ``epoch`` is the first bad epoch."""

    def __init__(self, epoch: int, message: str = "non-finite loss"):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")


class CheckpointError(EgoReachError, ValueError):
    """Checkpoint file is missing, corrupt, or incompatible."""


class ConfigError(EgoReachError, ValueError):
    """Configuration field is unknown or has an invalid value."""

    def __init__(self, field: str, message: str = ""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)
