"""Exception hierarchy for the segmentation pipeline.

Every error raised on purpose by this package derives from
:class:`PipelineError`, so callers can catch one type at the boundary.
"""

from sklearn.exceptions import NotFittedError


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


# Volume format and I/O ------------------------------------------------------

class MissingFileError(PipelineError):
    """A referenced file (header or raw blob) does not exist."""


class MalformedHeaderError(PipelineError):
    """A volume header is not valid JSON or misses required fields."""


class SizeMismatchError(PipelineError):
    """Raw blob length does not match the shape declared in the header."""


class InvariantViolationError(PipelineError):
    """Volume data violates a type invariant (non-binary mask, prob > 1, NaN)."""


class VolumeIoError(PipelineError):
    """Writing a volume to disk failed."""


# Dataset manifests and fold splitting ---------------------------------------

class MalformedManifestError(PipelineError):
    """Manifest JSON is invalid or violates the dataset contract."""


class DuplicateCaseIdError(MalformedManifestError):
    """The same case id appears more than once across the dataset."""


class MissingReferencedFileError(MalformedManifestError):
    """A manifest entry points at a file that does not exist."""


class ShapeMismatchError(PipelineError):
    """Two grids that must share a shape do not."""


class SpacingMismatchError(PipelineError):
    """Two grids that must share voxel spacing do not."""


class BadFoldCountError(PipelineError):
    """Cross-validation fold count is below 2."""


class StoreError(PipelineError):
    """Pseudo-label store layout violation (gap in iterations, coverage drift)."""


# Sequence composition -------------------------------------------------------

class InPlaneMismatchError(PipelineError):
    """Volumes to be concatenated have different in-plane (H, W) shapes."""


class BadInsertIndexError(PipelineError):
    """Insertion index outside [0, number of frames]."""


class FrameCountMismatchError(PipelineError):
    """Per-frame map stack does not match the sequence frame count."""


# Segmenter backends ---------------------------------------------------------

class BackendError(PipelineError):
    """A segmenter backend failed (process error, malformed response)."""


class BackendTimeoutError(PipelineError):
    """An external segmenter did not answer within the configured timeout."""


class DegenerateTrainingSetError(PipelineError):
    """Training set contains no foreground voxels at all."""


class UntrainedModelError(PipelineError, NotFittedError):
    """Prediction was requested from a model that has not been fitted."""


class EmptyLabelledSetError(PipelineError):
    """Pseudo-labelling needs at least one labelled volume."""


class CaseProcessingError(PipelineError):
    """One or more dataset cases failed during a batch stage.

    Carries the per-case errors so nothing fails silently.
    """

    def __init__(self, failures):
        self.failures = dict(failures)
        lines = ", ".join(f"{cid}: {err}" for cid, err in sorted(self.failures.items()))
        super().__init__(f"{len(self.failures)} case(s) failed: {lines}")


# Metrics --------------------------------------------------------------------

class EmptyMaskError(PipelineError):
    """Hausdorff distance is undefined for an empty mask."""


# Synthetic data -------------------------------------------------------------

class BadSpecError(PipelineError):
    """Synthetic dataset specification is invalid."""


# Run configuration ----------------------------------------------------------

class BadConfigError(PipelineError):
    """Run configuration file is invalid (unknown keys, bad ranges, bad JSON)."""
