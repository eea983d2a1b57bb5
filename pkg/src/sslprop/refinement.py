"""Iterative cross-validated refinement of pseudo labels.

Each round partitions the unlabelled cases into k folds, trains one
model per fold on the labelled ground truth plus the *off-fold* pseudo
labels, and re-predicts every case with the model that never saw it, so
no case is ever scored by a model trained on its own pseudo label.  The
new masks form the next snapshot in the store; the loop stops once
consecutive snapshots agree (mean Dice >= ``early_stop_dice``) or after
``max_iterations`` rounds.  Labelled ground truth is read-only
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import clone

from .errors import InvariantViolationError, StoreError
from .manifest import DatasetManifest, FoldAssignment, split_folds
from .metrics import dice
from .rng import derive_seed
from .store import PseudoLabelStore, models_dir
from .volumes import BinaryMask, load_volume


@dataclass(frozen=True)
class RefinementConfig:
    """Knobs for the refinement loop.

    ``early_stop_dice=None`` disables convergence detection entirely;
    the loop then always runs ``max_iterations`` rounds.
    """

    seed: int
    folds: int = 5
    max_iterations: int = 3
    early_stop_dice: float | None = 0.995
    threshold: float = 0.5
    resplit_per_iteration: bool = False

    def __post_init__(self):
        if self.folds < 2:
            raise InvariantViolationError(f"folds must be >= 2, got {self.folds}")
        if self.max_iterations < 1:
            raise InvariantViolationError(
                f"max_iterations must be >= 1, got {self.max_iterations}"
            )
        if not 0.0 < self.threshold < 1.0:
            raise InvariantViolationError(
                f"threshold must lie strictly between 0 and 1, got {self.threshold}"
            )
        if self.early_stop_dice is not None and not 0.0 < self.early_stop_dice <= 1.0:
            raise InvariantViolationError(
                f"early_stop_dice must lie in (0, 1], got {self.early_stop_dice}"
            )


@dataclass(frozen=True)
class IterationRecord:
    """What one refinement round did: which snapshot it produced, how the
    cases were split, and how much the masks moved versus the previous
    snapshot (mean Dice over cases)."""

    iteration: int
    fold_seed: int
    assignment: dict[str, int]
    mean_inter_dice: float
    model_dirs: tuple[str, ...]


@dataclass(frozen=True)
class RefinementTrace:
    records: tuple[IterationRecord, ...]
    stop_reason: str  # "converged" | "max_iterations"
    final_models: tuple

    def to_json_dict(self) -> dict:
        return {
            "stop_reason": self.stop_reason,
            "iterations": [
                {
                    "iteration": r.iteration,
                    "fold_seed": r.fold_seed,
                    "assignment": dict(sorted(r.assignment.items())),
                    "mean_inter_dice": r.mean_inter_dice,
                    "models": list(r.model_dirs),
                }
                for r in self.records
            ],
        }


def _check_store_covers(manifest: DatasetManifest, store: PseudoLabelStore) -> int:
    latest = store.latest_iteration()
    if latest is None:
        raise StoreError(f"{store.root}: no pseudo-label snapshot to refine")
    covered = set(store.case_ids(latest))
    expected = set(manifest.unlabelled_ids())
    if covered != expected:
        raise StoreError(
            f"{store.root}: snapshot {latest} covers {sorted(covered)} but the "
            f"manifest lists {sorted(expected)} unlabelled cases"
        )
    return latest


def refine_iteration(
    manifest: DatasetManifest,
    store: PseudoLabelStore,
    folds: FoldAssignment,
    backend,
    cfg: RefinementConfig,
) -> tuple[dict[str, BinaryMask], list]:
    """Run one refinement round on the store's latest snapshot.

    Publishes snapshot ``latest + 1`` (masks plus probability maps) and
    persists each fitted fold model under
    ``<root>/models/iter_<latest+1>/fold_<j>``.  Returns the new masks
    and the fold models in fold order.
    """
    current = _check_store_covers(manifest, store)
    produced = current + 1
    pseudo = store.load_masks(current)
    if set(folds.assignment) != set(pseudo):
        raise InvariantViolationError(
            "fold assignment does not cover the stored case ids"
        )

    labelled_images = [load_volume(c.image) for c in manifest.labelled]
    labelled_masks = [load_volume(c.mask) for c in manifest.labelled]
    unlabelled = {
        c.case_id: load_volume(c.image) for c in manifest.unlabelled
    }

    new_masks: dict[str, BinaryMask] = {}
    new_probs = {}
    models = []
    for j in range(folds.k):
        held_out = folds.cases_in_fold(j)
        off_fold = sorted(set(pseudo) - set(held_out))
        model = clone(backend)
        model.fit(
            labelled_images + [unlabelled[cid] for cid in off_fold],
            labelled_masks + [pseudo[cid] for cid in off_fold],
            model_dir=models_dir(store.root, produced, j),
        )
        models.append(model)
        for cid in held_out:
            prob = model.predict_proba(unlabelled[cid])
            new_probs[cid] = prob
            new_masks[cid] = BinaryMask(
                (prob.data >= cfg.threshold).astype(np.uint8), prob.spacing
            )

    if set(new_masks) != set(pseudo):  # each case exactly once, by construction
        raise InvariantViolationError("fold predictions do not cover every case exactly once")
    store.write_iteration(produced, new_masks, new_probs)
    return new_masks, models


def run_refinement(
    manifest: DatasetManifest,
    store: PseudoLabelStore,
    backend,
    cfg: RefinementConfig,
) -> RefinementTrace:
    """Refine the store's latest snapshot for up to ``max_iterations`` rounds.

    The fold split is drawn once from ``cfg.seed`` and reused every round
    unless ``resplit_per_iteration`` is set, in which case round ``i``
    uses a split seeded with ``derive_seed(cfg.seed, i)``.  Convergence
    is only checked while rounds remain, so ``max_iterations=1`` never
    reports "converged".
    """
    _check_store_covers(manifest, store)
    fixed = None if cfg.resplit_per_iteration else split_folds(manifest, cfg.folds, cfg.seed)

    records: list[IterationRecord] = []
    models: list = []
    stop_reason = "max_iterations"
    for step in range(cfg.max_iterations):
        current = store.latest_iteration()
        produced = current + 1
        if cfg.resplit_per_iteration:
            fold_seed = derive_seed(cfg.seed, produced)
            folds = split_folds(manifest, cfg.folds, fold_seed)
        else:
            fold_seed = cfg.seed
            folds = fixed
        previous = store.load_masks(current)
        new_masks, models = refine_iteration(manifest, store, folds, backend, cfg)
        mean_dice = float(
            np.mean([dice(previous[cid], new_masks[cid]) for cid in sorted(new_masks)])
        )
        records.append(
            IterationRecord(
                iteration=produced,
                fold_seed=fold_seed,
                assignment=dict(folds.assignment),
                mean_inter_dice=mean_dice,
                model_dirs=tuple(
                    f"models/iter_{produced}/fold_{j}" for j in range(folds.k)
                ),
            )
        )
        remaining = cfg.max_iterations - step - 1
        if (
            cfg.early_stop_dice is not None
            and remaining > 0
            and mean_dice >= cfg.early_stop_dice
        ):
            stop_reason = "converged"
            break
    return RefinementTrace(tuple(records), stop_reason, tuple(models))


def infer(models, volume, threshold: float = 0.5) -> BinaryMask:
    """Segment a volume with a fold-model ensemble.

    Probabilities are averaged in fold order with float32 accumulation,
    then thresholded (foreground at ``mean >= threshold``), mirroring
    how the refinement loop itself binarises maps.
    """
    models = list(models)
    if not models:
        raise InvariantViolationError("at least one model is required")
    total = np.zeros(volume.shape, np.float32)
    for model in models:
        prob = model.predict_proba(volume)
        total = total + prob.data
    averaged = total / np.float32(len(models))
    return BinaryMask((averaged >= threshold).astype(np.uint8), volume.spacing)
