"""Versioned on-disk store for pseudo-label snapshots.

Layout, all under one run root::

    <root>/iter_<i>/<case_id>.{json,raw}          binary pseudo masks
    <root>/iter_<i>/probs/<case_id>.{json,raw}    probability maps (optional)
    <root>/models/iter_<i>/fold_<j>/              fold models for snapshot i

Iteration indices are contiguous from 0 and every snapshot covers the
same case ids as its predecessor.  Snapshots are written to a temp
directory and renamed into place, so readers never see partial state.
"""

from __future__ import annotations

import shutil
from pathlib import Path
from typing import Mapping

from .errors import StoreError
from .volumes import BinaryMask, ProbVolume, load_volume, save_volume

_ITER_PREFIX = "iter_"


def models_dir(root, iteration: int, fold: int) -> Path:
    """Directory holding the fold model that produced snapshot ``iteration``."""
    return Path(root) / "models" / f"iter_{iteration}" / f"fold_{fold}"


class PseudoLabelStore:
    """Reader/writer for the per-iteration pseudo-label snapshots."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._validate_layout()

    # layout -----------------------------------------------------------------

    def _iter_dir(self, iteration: int) -> Path:
        return self.root / f"{_ITER_PREFIX}{iteration}"

    def _validate_layout(self) -> None:
        indices = self.iterations()
        if indices != list(range(len(indices))):
            raise StoreError(f"{self.root}: iteration indices not contiguous: {indices}")
        previous: set[str] | None = None
        for i in indices:
            cases = set(self.case_ids(i))
            if not cases:
                raise StoreError(f"{self.root}: snapshot {i} is empty")
            if previous is not None and cases != previous:
                raise StoreError(
                    f"{self.root}: snapshot {i} covers {sorted(cases)} "
                    f"but snapshot {i - 1} covered {sorted(previous)}"
                )
            previous = cases

    def iterations(self) -> list[int]:
        found = []
        for p in self.root.iterdir() if self.root.is_dir() else []:
            if p.is_dir() and p.name.startswith(_ITER_PREFIX):
                tail = p.name[len(_ITER_PREFIX):]
                if tail.isdigit():
                    found.append(int(tail))
        return sorted(found)

    def latest_iteration(self) -> int | None:
        indices = self.iterations()
        return indices[-1] if indices else None

    def case_ids(self, iteration: int) -> tuple[str, ...]:
        d = self._iter_dir(iteration)
        if not d.is_dir():
            raise StoreError(f"{self.root}: no snapshot {iteration}")
        return tuple(sorted(p.stem for p in d.glob("*.json")))

    # reads ------------------------------------------------------------------

    def mask_stem(self, iteration: int, case_id: str) -> Path:
        return self._iter_dir(iteration) / case_id

    def load_mask(self, iteration: int, case_id: str) -> BinaryMask:
        mask = load_volume(self.mask_stem(iteration, case_id))
        if not isinstance(mask, BinaryMask):
            raise StoreError(f"{self.mask_stem(iteration, case_id)}: not a mask volume")
        return mask

    def load_masks(self, iteration: int) -> dict[str, BinaryMask]:
        return {cid: self.load_mask(iteration, cid) for cid in self.case_ids(iteration)}

    def load_prob(self, iteration: int, case_id: str) -> ProbVolume | None:
        stem = self._iter_dir(iteration) / "probs" / case_id
        if not stem.with_suffix(".json").is_file():
            return None
        prob = load_volume(stem, kind="prob")
        assert isinstance(prob, ProbVolume)
        return prob

    # writes -----------------------------------------------------------------

    def write_iteration(
        self,
        iteration: int,
        masks: Mapping[str, BinaryMask],
        probs: Mapping[str, ProbVolume] | None = None,
    ) -> None:
        """Atomically publish one snapshot.

        ``iteration`` must be the next unused index and, past iteration 0,
        the case set must equal the previous snapshot's.
        """
        expected = 0 if self.latest_iteration() is None else self.latest_iteration() + 1
        if iteration != expected:
            raise StoreError(
                f"{self.root}: cannot write snapshot {iteration}, next expected is {expected}"
            )
        if not masks:
            raise StoreError("refusing to write an empty snapshot")
        if iteration > 0:
            previous = set(self.case_ids(iteration - 1))
            if set(masks) != previous:
                raise StoreError(
                    f"snapshot {iteration} case set {sorted(masks)} does not match "
                    f"snapshot {iteration - 1} case set {sorted(previous)}"
                )
        if probs is not None and set(probs) != set(masks):
            raise StoreError("probability maps must cover exactly the mask case set")

        tmp = self.root / f".tmp_{_ITER_PREFIX}{iteration}"
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        for cid in sorted(masks):
            save_volume(masks[cid], tmp / cid)
        if probs is not None:
            for cid in sorted(probs):
                save_volume(probs[cid], tmp / "probs" / cid)
        tmp.replace(self._iter_dir(iteration))

    def drop_after(self, iteration: int) -> None:
        """Delete snapshots and models for indices > ``iteration``."""
        for i in self.iterations():
            if i > iteration:
                shutil.rmtree(self._iter_dir(i))
                model_root = self.root / "models" / f"{_ITER_PREFIX}{i}"
                if model_root.is_dir():
                    shutil.rmtree(model_root)
