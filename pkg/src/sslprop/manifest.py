"""Dataset manifests and deterministic cross-validation fold splitting.

A manifest is a JSON file::

    {"labelled":   [{"id": str, "image": path, "mask": path, "vendor": str?}],
     "unlabelled": [{"id": str, "image": path, "vendor": str?}]}

Paths are MVOL stems, resolved relative to the manifest's directory when
not absolute.  Parsing validates existence of every referenced pair and
that each labelled mask shape-matches its image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    BadFoldCountError,
    DuplicateCaseIdError,
    MalformedManifestError,
    MissingFileError,
    MissingReferencedFileError,
    ShapeMismatchError,
)
from .rng import SplitMix64
from .volumes import read_header, volume_stem


@dataclass(frozen=True)
class LabelledCase:
    case_id: str
    image: Path
    mask: Path
    vendor: str | None = None


@dataclass(frozen=True)
class UnlabelledCase:
    case_id: str
    image: Path
    vendor: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    labelled: tuple[LabelledCase, ...]
    unlabelled: tuple[UnlabelledCase, ...]
    path: Path

    @property
    def num_labelled(self) -> int:
        return len(self.labelled)

    @property
    def num_unlabelled(self) -> int:
        return len(self.unlabelled)

    def unlabelled_ids(self) -> tuple[str, ...]:
        return tuple(c.case_id for c in self.unlabelled)

    def unlabelled_by_id(self) -> dict[str, UnlabelledCase]:
        return {c.case_id: c for c in self.unlabelled}

    def vendors(self) -> dict[str, str | None]:
        out: dict[str, str | None] = {}
        for c in (*self.labelled, *self.unlabelled):
            out[c.case_id] = c.vendor
        return out


def _resolve(base: Path, raw: str) -> Path:
    p = Path(raw)
    return volume_stem(p if p.is_absolute() else base / p)


def _check_pair_exists(stem: Path, case_id: str) -> None:
    for suffix in (".json", ".raw"):
        if not stem.with_suffix(suffix).is_file():
            raise MissingReferencedFileError(
                f"case {case_id!r}: missing file {stem.with_suffix(suffix)}"
            )


def parse_manifest(path) -> DatasetManifest:
    """Load and validate a dataset manifest.

    Raises:
        MalformedManifestError, DuplicateCaseIdError,
        MissingReferencedFileError, ShapeMismatchError.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedManifestError(f"unreadable manifest {path}: {e}") from e
    if not isinstance(doc, dict) or "labelled" not in doc or "unlabelled" not in doc:
        raise MalformedManifestError(f"{path}: needs 'labelled' and 'unlabelled' lists")

    base = path.parent
    seen: set[str] = set()

    def check_id(entry) -> str:
        cid = entry.get("id")
        if not isinstance(cid, str) or not cid:
            raise MalformedManifestError(f"{path}: entry without usable 'id': {entry!r}")
        if cid in seen:
            raise DuplicateCaseIdError(f"{path}: duplicate case id {cid!r}")
        seen.add(cid)
        return cid

    labelled = []
    for entry in doc["labelled"]:
        if not isinstance(entry, dict) or "image" not in entry or "mask" not in entry:
            raise MalformedManifestError(f"{path}: labelled entry needs 'image' and 'mask'")
        cid = check_id(entry)
        image = _resolve(base, entry["image"])
        mask = _resolve(base, entry["mask"])
        _check_pair_exists(image, cid)
        _check_pair_exists(mask, cid)
        image_shape = read_header(image)["shape"]
        mask_shape = read_header(mask)["shape"]
        if image_shape != mask_shape:
            raise ShapeMismatchError(
                f"case {cid!r}: mask shape {mask_shape} != image shape {image_shape}"
            )
        labelled.append(LabelledCase(cid, image, mask, entry.get("vendor")))

    unlabelled = []
    for entry in doc["unlabelled"]:
        if not isinstance(entry, dict) or "image" not in entry:
            raise MalformedManifestError(f"{path}: unlabelled entry needs 'image'")
        cid = check_id(entry)
        image = _resolve(base, entry["image"])
        _check_pair_exists(image, cid)
        unlabelled.append(UnlabelledCase(cid, image, entry.get("vendor")))

    if not labelled:
        raise MalformedManifestError(f"{path}: at least one labelled case is required")
    if not unlabelled:
        raise MalformedManifestError(f"{path}: at least one unlabelled case is required")
    return DatasetManifest(tuple(labelled), tuple(unlabelled), path)


# Fold splitting -------------------------------------------------------------

@dataclass(frozen=True)
class FoldAssignment:
    """Partition of the unlabelled case ids into k folds."""

    k: int
    assignment: dict[str, int]

    def fold_of(self, case_id: str) -> int:
        return self.assignment[case_id]

    def cases_in_fold(self, fold: int) -> tuple[str, ...]:
        return tuple(sorted(c for c, f in self.assignment.items() if f == fold))

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for f in self.assignment.values():
            sizes[f] += 1
        return sizes


def split_case_ids(case_ids, k: int, seed: int) -> FoldAssignment:
    """Deterministic k-fold split of a set of case ids.

    Ids are sorted lexicographically, shuffled by Fisher-Yates on a
    SplitMix64 stream seeded with ``seed`` (bounded draws via the
    multiply-shift reduction), then dealt round-robin to folds 0..k-1.
    A pure function of (sorted id set, k, seed).
    """
    if k < 2:
        raise BadFoldCountError(f"fold count must be >= 2, got {k}")
    ordered = sorted(case_ids)
    if len(set(ordered)) != len(ordered):
        raise DuplicateCaseIdError("case ids for fold splitting must be unique")
    SplitMix64(seed).shuffle(ordered)
    return FoldAssignment(k, {cid: pos % k for pos, cid in enumerate(ordered)})


def split_folds(manifest: DatasetManifest, k: int, seed: int) -> FoldAssignment:
    """Split the manifest's unlabelled cases into k folds (see split_case_ids)."""
    return split_case_ids(manifest.unlabelled_ids(), k, seed)
