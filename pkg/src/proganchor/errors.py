"""Typed exceptions shared across the package."""


class ProgAnchorError(Exception):
    """Base class for all package errors."""


class DegenerateHullError(ProgAnchorError):
    """Landmark hull is empty or collinear; no blend mask can be built."""


class WarpBoundsError(ProgAnchorError):
    """Warping the source face left uncovered pixels inside the blend mask."""


class EmptyPoolError(ProgAnchorError):
    """No candidate source frames remain after identity exclusion."""


class FrameMismatchError(ProgAnchorError):
    """Features handed to bridging come from different video frames."""


class ShapeMismatchError(ProgAnchorError):
    """Tensor shape does not match the configured feature geometry."""


class ManifestError(ProgAnchorError):
    """Dataset manifest is malformed, duplicated, or references missing files."""


class MetricError(ProgAnchorError):
    """Metric is undefined for the given inputs (e.g. single-class score set)."""


class DegenerateEmbeddingError(ProgAnchorError):
    """Embedding statistics are degenerate (zero spread or coincident centroids)."""


class CheckpointError(ProgAnchorError):
    """Checkpoint file is unreadable or carries an unknown format version."""


class CheckpointMismatchError(CheckpointError):
    """Checkpoint metadata conflicts with the run configuration."""


class TrainingDivergedError(ProgAnchorError):
    """A loss became non-finite; carries the frame ids of the offending batch."""

    def __init__(self, message: str, frame_ids=()):
        super().__init__(message)
        self.frame_ids = tuple(frame_ids)
