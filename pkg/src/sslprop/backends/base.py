"""Shared backend types: the propagation request and the two contracts.

Two kinds of segmenter back the pipeline:

* a *frozen* promptable propagator: given a frame sequence where some
  frames carry binary mask prompts, it emits a logit map per frame,
* a *trainable* volumetric segmenter: fitted on (volume, mask) pairs,
  it predicts per-voxel foreground probabilities.

Both return raw logits / probabilities; thresholding stays with the
caller.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..composition import ComposedSequence
from ..errors import InvariantViolationError
from ..volumes import BinaryMask, ProbVolume, VoxelVolume


@dataclass(frozen=True)
class PropagationRequest:
    """Frames to segment, with mask prompts on a subset of them.

    ``prompt_masks`` frame ``i`` belongs to frame index
    ``prompt_frames[i]`` of ``frames``.
    """

    frames: VoxelVolume
    prompt_frames: tuple[int, ...]
    prompt_masks: BinaryMask

    def __post_init__(self):
        object.__setattr__(self, "prompt_frames", tuple(int(f) for f in self.prompt_frames))
        if not self.prompt_frames:
            raise InvariantViolationError("at least one prompt frame is required")
        if len(set(self.prompt_frames)) != len(self.prompt_frames):
            raise InvariantViolationError("prompt frames must be distinct")
        if any(not 0 <= f < self.frames.num_frames for f in self.prompt_frames):
            raise InvariantViolationError(
                f"prompt frames {self.prompt_frames} outside "
                f"[0, {self.frames.num_frames})"
            )
        if self.prompt_masks.num_frames != len(self.prompt_frames):
            raise InvariantViolationError(
                f"{len(self.prompt_frames)} prompt frames but "
                f"{self.prompt_masks.num_frames} mask frames"
            )
        if self.prompt_masks.shape[1:] != self.frames.shape[1:]:
            raise InvariantViolationError(
                f"prompt masks {self.prompt_masks.shape[1:]} do not match "
                f"frames {self.frames.shape[1:]} in-plane"
            )


def request_from_sequence(seq: ComposedSequence) -> PropagationRequest:
    """Build the propagation request for a composed sequence: every inserted
    labelled frame becomes a prompt carrying its ground-truth mask."""
    return PropagationRequest(
        frames=seq.frames,
        prompt_frames=tuple(seq.prompt_range),
        prompt_masks=seq.prompt_masks,
    )


class FrozenSegmenter(Protocol):
    """Promptable frame-propagation segmenter; never trained by this package."""

    def propagate(self, request: PropagationRequest) -> np.ndarray:
        """Return float32 logits of the same shape as ``request.frames``."""
        ...


class TrainableSegmenter(Protocol):
    """Volumetric segmenter retrained from scratch each refinement round."""

    def fit(self, volumes, masks, model_dir=None) -> "TrainableSegmenter":
        ...

    def predict_proba(self, volume: VoxelVolume) -> ProbVolume:
        ...

    def load(self, model_dir) -> "TrainableSegmenter":
        ...
