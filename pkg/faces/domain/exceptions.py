class DomainError(Exception):
    """Base class for domain-layer errors."""


class ValidationError(DomainError):
    """Raised when a value, shape or range is invalid."""


class ConfigurationError(DomainError):
    """Raised when inputs disagree with the configured rig or network."""


class LandmarkFormatError(ValidationError):
    """Raised when a landmark file is malformed."""

    def __init__(self, path, line, reason):
        self.path = str(path)
        self.line = line
        self.reason = reason
        location = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{location}: {reason}")


class DataIOError(DomainError):
    """Raised when a referenced file is missing or unreadable."""


class CheckpointError(DomainError):
    """Raised when a checkpoint is corrupt or incompatible."""


class TrainingStateError(DomainError):
    """Raised when a training step runs in the wrong stage."""


class FlowProviderError(DomainError):
    """Raised when an optical flow is unavailable."""
