"""Exception types shared across the package."""


class OccqError(Exception):
    """Base class for all package-specific errors."""


class InvalidSpec(OccqError):
    """A constructor or operation received inconsistent parameters."""


class InvalidAction(OccqError):
    """An action outside the environment's action space."""


class NumericalFault(OccqError):
    """A non-finite value showed up where finite numbers are required."""


class ShapeError(OccqError):
    """Array shapes do not chain together."""


class BatchTooSmall(OccqError):
    """A contrastive batch needs at least two anchors."""


class RewardRequired(OccqError):
    """An operation needs rewards but the dataset is reward-free."""


class AccumulatorUninitialized(OccqError):
    """The reward-weighted feature accumulator has not seen a batch yet."""


class FormatError(OccqError):
    """A serialized file is malformed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class VersionError(OccqError):
    """A serialized file carries an unsupported format version."""
