"""Training-free ensemble pseudo-labelling of unlabelled volumes.

Every labelled volume is spliced into every unlabelled volume at several
sampled slice locations; a frozen propagation backend segments each
composed sequence from the inserted mask prompts.  The per-voxel sigmoid
outputs restricted to the unlabelled frames are averaged over all runs and
thresholded into the iteration-0 pseudo-label snapshot.

Reproducibility notes: the accumulation runs in float32, labelled-volume
outer / insertion inner, summed left to right; per-case seeds derive from
the case's ordinal in the sorted id list, so neither manifest order nor
worker count changes a single bit of the output.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .backends import request_from_sequence
from .composition import compose_insert, extract_unlabelled, sample_insertion_plan
from .errors import (
    BackendTimeoutError,
    CaseProcessingError,
    EmptyLabelledSetError,
    InvariantViolationError,
    PipelineError,
)
from .manifest import DatasetManifest
from .rng import derive_seed
from .store import PseudoLabelStore
from .volumes import BinaryMask, ProbVolume, VoxelVolume, load_volume, resize_inplane


@dataclass(frozen=True)
class BootstrapConfig:
    """Knobs of the ensemble stage.

    ``insertions`` is the number of sampled insert locations per labelled
    volume; ``work_size`` optionally conditions all frames to a fixed
    in-plane (H, W) before propagation (outputs are resized back).
    """

    seed: int
    insertions: int = 4
    threshold: float = 0.5
    work_size: tuple[int, int] | None = None

    def __post_init__(self):
        if self.insertions < 1:
            raise InvariantViolationError(f"insertions must be >= 1, got {self.insertions}")
        if not 0.0 < self.threshold < 1.0:
            raise InvariantViolationError(
                f"threshold must lie strictly inside (0, 1), got {self.threshold}"
            )
        if self.work_size is not None:
            h, w = self.work_size
            if h < 1 or w < 1:
                raise InvariantViolationError(f"bad work size {self.work_size}")
            object.__setattr__(self, "work_size", (int(h), int(w)))


def _sigmoid_f32(logits: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-logits))


def pseudo_label_volume(
    unlabelled: VoxelVolume,
    labelled,
    backend,
    cfg: BootstrapConfig,
) -> tuple[ProbVolume, BinaryMask]:
    """Ensemble pseudo-label one unlabelled volume.

    Args:
        unlabelled: the volume to pseudo-label.
        labelled: list of (VoxelVolume, BinaryMask) ground-truth pairs.
        backend: frozen propagation segmenter.
        cfg: stage knobs; ``cfg.seed`` should already be case-specific.

    Returns:
        The averaged probability map and its thresholded mask, both at the
        unlabelled volume's native resolution.
    """
    labelled = list(labelled)
    if not labelled:
        raise EmptyLabelledSetError("pseudo-labelling needs at least one labelled pair")
    target_hw = cfg.work_size or unlabelled.shape[1:]
    work = resize_inplane(unlabelled, target_hw)
    total = np.zeros(work.shape, np.float32)
    for i, (lab_vol, lab_mask) in enumerate(labelled):
        plan = sample_insertion_plan(
            work.num_frames, cfg.insertions, derive_seed(cfg.seed, i)
        )
        lab_vol = resize_inplane(lab_vol, target_hw)
        lab_mask = resize_inplane(lab_mask, target_hw)
        for r, location in enumerate(plan.locations):
            try:
                seq = compose_insert(lab_vol, lab_mask, work, location)
                logits = backend.propagate(request_from_sequence(seq))
            except BackendTimeoutError as e:
                raise BackendTimeoutError(
                    f"(labelled {i}, insertion {r}): {e}"
                ) from e
            except PipelineError as e:
                raise type(e)(f"(labelled {i}, insertion {r}): {e}") from e
            total = total + extract_unlabelled(_sigmoid_f32(logits), seq)
    averaged = total / (len(labelled) * cfg.insertions)
    prob = ProbVolume(np.clip(averaged, 0.0, 1.0), work.spacing)
    prob = resize_inplane(prob, unlabelled.shape[1:])
    mask = BinaryMask((prob.data >= cfg.threshold).astype(np.uint8), unlabelled.spacing)
    return prob, mask


def pseudo_label_dataset(
    manifest: DatasetManifest,
    backend,
    cfg: BootstrapConfig,
    store_root,
    workers: int = 1,
) -> PseudoLabelStore:
    """Pseudo-label every unlabelled case and publish store iteration 0.

    Cases run independently (optionally on ``workers`` threads); each gets
    the seed ``derive_seed(cfg.seed, ordinal)`` with the ordinal taken from
    the sorted unlabelled id list.  If any case fails the whole run fails
    with :class:`CaseProcessingError` and nothing is published.
    """
    labelled = [
        (load_volume(c.image), load_volume(c.mask, kind="mask")) for c in manifest.labelled
    ]
    by_id = manifest.unlabelled_by_id()
    ordered_ids = sorted(by_id)

    def run_case(ordinal: int) -> tuple[ProbVolume, BinaryMask]:
        case = by_id[ordered_ids[ordinal]]
        case_cfg = replace(cfg, seed=derive_seed(cfg.seed, ordinal))
        return pseudo_label_volume(load_volume(case.image), labelled, backend, case_cfg)

    results: dict[str, tuple[ProbVolume, BinaryMask]] = {}
    failures: dict[str, PipelineError] = {}
    if workers <= 1:
        for ordinal, case_id in enumerate(ordered_ids):
            try:
                results[case_id] = run_case(ordinal)
            except PipelineError as e:
                failures[case_id] = e
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                case_id: pool.submit(run_case, ordinal)
                for ordinal, case_id in enumerate(ordered_ids)
            }
            for case_id, future in futures.items():
                try:
                    results[case_id] = future.result()
                except PipelineError as e:
                    failures[case_id] = e
    if failures:
        raise CaseProcessingError(failures)

    store = PseudoLabelStore(store_root)
    store.write_iteration(
        0,
        masks={cid: mask for cid, (_, mask) in results.items()},
        probs={cid: prob for cid, (prob, _) in results.items()},
    )
    return store
