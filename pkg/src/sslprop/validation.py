"""Input validation helpers shared by the estimator-style backends."""

from __future__ import annotations

from .errors import InvariantViolationError, ShapeMismatchError, UntrainedModelError
from .volumes import BinaryMask, VoxelVolume


def check_training_set(volumes, masks) -> tuple[list[VoxelVolume], list[BinaryMask]]:
    """Validate a paired (volumes, masks) training set and return it as lists."""
    volumes, masks = list(volumes), list(masks)
    if not volumes:
        raise InvariantViolationError("training set must not be empty")
    if len(volumes) != len(masks):
        raise InvariantViolationError(
            f"{len(volumes)} volumes but {len(masks)} masks"
        )
    for i, (vol, mask) in enumerate(zip(volumes, masks)):
        if not isinstance(vol, VoxelVolume) or not isinstance(mask, BinaryMask):
            raise InvariantViolationError(
                f"training pair {i} must be (VoxelVolume, BinaryMask), "
                f"got ({type(vol).__name__}, {type(mask).__name__})"
            )
        if vol.shape != mask.shape:
            raise ShapeMismatchError(
                f"training pair {i}: volume {vol.shape} vs mask {mask.shape}"
            )
    return volumes, masks


def check_fitted(estimator, attributes) -> None:
    """Raise UntrainedModelError unless every fitted attribute is present."""
    missing = [a for a in attributes if not hasattr(estimator, a)]
    if missing:
        raise UntrainedModelError(
            f"{type(estimator).__name__} is not fitted "
            f"(missing {', '.join(missing)}); call fit() or load() first"
        )
