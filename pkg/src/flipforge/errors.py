"""Exception types shared across the package."""


class FlipForgeError(Exception):
    """Base class for all package errors."""


class DegenerateConfig(FlipForgeError):
    """Point configuration does not affinely span its declared dimension."""


class DegenerateHeights(FlipForgeError):
    """Height lift whose lower hull has a non-simplex cell (caller resamples)."""


class StaleAction(FlipForgeError):
    """Flip action applied to a triangulation that no longer contains its removed set."""


class FormatError(FlipForgeError):
    """Malformed data file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointError(FlipForgeError):
    """Unreadable, truncated, or mismatched checkpoint."""


class TrainingError(FlipForgeError):
    """Non-finite loss or otherwise unrecoverable training state."""
