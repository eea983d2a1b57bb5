"""Splicing labelled frames into unlabelled volumes and undoing it.

A labelled volume (with its ground-truth mask) is inserted as one
contiguous block into an unlabelled volume at a sampled slice location.
The resulting :class:`ComposedSequence` remembers, per combined frame,
where that frame came from, so the segmenter output restricted to the
unlabelled frames can be recovered exactly afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .errors import (
    BadInsertIndexError,
    FrameCountMismatchError,
    InPlaneMismatchError,
    InvariantViolationError,
    ShapeMismatchError,
)
from .rng import SplitMix64
from .volumes import BinaryMask, ProbVolume, VoxelVolume

LABELLED = "labelled"
UNLABELLED = "unlabelled"


class FrameOrigin(NamedTuple):
    """Provenance of one combined frame: which input it came from and where."""

    source: str
    index: int


@dataclass(frozen=True)
class InsertionPlan:
    """The slice locations (each in [0, num_frames]) chosen for one pairing."""

    locations: tuple[int, ...]
    seed: int


def sample_insertion_plan(num_frames: int, insertions: int, seed: int) -> InsertionPlan:
    """Sample insertion locations over the num_frames + 1 possible slots.

    Deterministic in (num_frames, insertions, seed).  Sampling is without
    replacement (a Fisher-Yates shuffle of the slot list, keeping the first
    `insertions` entries) whenever enough slots exist; otherwise each
    location is an independent bounded draw.
    """
    if num_frames < 1:
        raise ValueError(f"need at least one frame, got {num_frames}")
    if insertions < 1:
        raise ValueError(f"need at least one insertion, got {insertions}")
    rng = SplitMix64(seed)
    slots = num_frames + 1
    if insertions <= slots:
        locations = tuple(rng.shuffled(range(slots))[:insertions])
    else:
        locations = tuple(rng.next_below(slots) for _ in range(insertions))
    return InsertionPlan(locations=locations, seed=seed)


@dataclass(frozen=True)
class ComposedSequence:
    """An unlabelled volume with a labelled block spliced in.

    `prompt_range` marks the inserted labelled frames inside `frames`;
    `prompt_masks` holds their ground-truth masks, frame for frame;
    `origin_map` records the provenance of every combined frame.
    """

    frames: VoxelVolume
    prompt_range: range
    prompt_masks: BinaryMask
    origin_map: tuple[FrameOrigin, ...]

    def __post_init__(self):
        if len(self.origin_map) != self.frames.num_frames:
            raise InvariantViolationError("origin_map must cover every frame")
        if len(self.prompt_range) != self.prompt_masks.num_frames:
            raise InvariantViolationError("one prompt mask frame per inserted frame")
        if self.prompt_range.step != 1 or (
            self.prompt_range and not (
                0 <= self.prompt_range.start
                and self.prompt_range.stop <= self.frames.num_frames
            )
        ):
            raise InvariantViolationError("prompt_range must lie inside the sequence")

    @property
    def num_unlabelled_frames(self) -> int:
        return self.frames.num_frames - len(self.prompt_range)


def compose_insert(
    labelled_image: VoxelVolume,
    labelled_mask: BinaryMask,
    unlabelled: VoxelVolume,
    insert_at: int,
) -> ComposedSequence:
    """Insert the labelled frames into the unlabelled volume before frame
    `insert_at` (0 prepends, num_frames appends).

    Both inputs must already share the in-plane shape (H, W); the combined
    sequence lives on the unlabelled volume's grid and carries its spacing.
    """
    if labelled_image.shape != labelled_mask.shape:
        raise ShapeMismatchError(
            f"labelled image {labelled_image.shape} and mask "
            f"{labelled_mask.shape} differ"
        )
    if labelled_image.shape[1:] != unlabelled.shape[1:]:
        raise InPlaneMismatchError(
            f"in-plane shapes differ: labelled {labelled_image.shape[1:]} "
            f"vs unlabelled {unlabelled.shape[1:]}"
        )
    num_u = unlabelled.num_frames
    if not 0 <= insert_at <= num_u:
        raise BadInsertIndexError(
            f"insert location {insert_at} outside [0, {num_u}]"
        )
    num_l = labelled_image.num_frames
    combined = np.concatenate(
        [unlabelled.data[:insert_at], labelled_image.data, unlabelled.data[insert_at:]]
    )
    origin_map = (
        tuple(FrameOrigin(UNLABELLED, j) for j in range(insert_at))
        + tuple(FrameOrigin(LABELLED, j) for j in range(num_l))
        + tuple(FrameOrigin(UNLABELLED, j) for j in range(insert_at, num_u))
    )
    return ComposedSequence(
        frames=VoxelVolume(combined, unlabelled.spacing),
        prompt_range=range(insert_at, insert_at + num_l),
        prompt_masks=BinaryMask(labelled_mask.data, unlabelled.spacing),
        origin_map=origin_map,
    )


def extract_unlabelled(
    probs: Union[ProbVolume, np.ndarray], seq: ComposedSequence
) -> Union[ProbVolume, np.ndarray]:
    """Keep only the unlabelled frames of a per-frame map over `seq`.

    Frames come back in original unlabelled order.  A plain array input
    yields a plain array; a :class:`ProbVolume` comes back as one.
    """
    data = probs.data if isinstance(probs, ProbVolume) else np.asarray(probs)
    if data.ndim != 3:
        raise InvariantViolationError(f"expected a per-frame stack, got ndim={data.ndim}")
    if data.shape[0] != len(seq.origin_map):
        raise FrameCountMismatchError(
            f"map has {data.shape[0]} frames, sequence has {len(seq.origin_map)}"
        )
    order = sorted(
        (k for k, origin in enumerate(seq.origin_map) if origin.source == UNLABELLED),
        key=lambda k: seq.origin_map[k].index,
    )
    out = np.ascontiguousarray(data[order])
    if isinstance(probs, ProbVolume):
        return ProbVolume(out, probs.spacing)
    return out
