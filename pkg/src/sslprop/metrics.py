"""Evaluation metrics (Dice overlap, exact Hausdorff distance) and report
aggregation.

Hausdorff distances are measured in millimetres between mask *boundary*
voxels, where a voxel is boundary iff it is foreground and at least one of
its six face-neighbours is background; volume edges count as background.
The distance is the exact maximum (no percentile), available via a brute
force path and a distance-transform path that agree to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.spatial.distance import cdist

from .errors import (
    EmptyMaskError,
    ShapeMismatchError,
    SpacingMismatchError,
)
from .volumes import BinaryMask

# above this many point-pair distances, hausdorff(method="auto") switches
# from the quadratic brute-force path to the distance-transform path
_BRUTE_FORCE_LIMIT = 4_000_000


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice overlap 2|A∩B| / (|A|+|B|); two empty masks count as 1.0."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"dice needs equal shapes, got {a.shape} vs {b.shape}")
    fa, fb = a.data != 0, b.data != 0
    denominator = int(np.count_nonzero(fa)) + int(np.count_nonzero(fb))
    if denominator == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(fa & fb)) / denominator


def boundary_mask(mask: BinaryMask) -> np.ndarray:
    """Boolean grid marking the 6-connectivity boundary of the foreground."""
    fg = mask.data != 0
    padded = np.pad(fg, 1, mode="constant", constant_values=False)
    interior = (
        padded[2:, 1:-1, 1:-1]
        & padded[:-2, 1:-1, 1:-1]
        & padded[1:-1, 2:, 1:-1]
        & padded[1:-1, :-2, 1:-1]
        & padded[1:-1, 1:-1, 2:]
        & padded[1:-1, 1:-1, :-2]
    )
    return fg & ~interior


def surface_points(mask: BinaryMask) -> np.ndarray:
    """Boundary voxel coordinates scaled by spacing to millimetres, (n, 3)."""
    coords = np.argwhere(boundary_mask(mask)).astype(np.float64)
    return coords * np.asarray(mask.spacing, dtype=np.float64)


def _check_comparable(a: BinaryMask, b: BinaryMask) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"masks differ in shape: {a.shape} vs {b.shape}")
    if a.spacing != b.spacing:
        raise SpacingMismatchError(f"masks differ in spacing: {a.spacing} vs {b.spacing}")
    if not a.data.any() or not b.data.any():
        raise EmptyMaskError("Hausdorff distance needs two nonempty masks")


def _directed_brute(src_mm: np.ndarray, dst_mm: np.ndarray) -> float:
    return float(cdist(src_mm, dst_mm).min(axis=1).max())


def _directed_edt(src_boundary: np.ndarray, dst_boundary: np.ndarray, spacing) -> float:
    to_dst = distance_transform_edt(~dst_boundary, sampling=spacing)
    return float(to_dst[src_boundary].max())


def directed_hausdorff(a: BinaryMask, b: BinaryMask, method: str = "auto") -> float:
    """max over boundary(a) of the distance to the nearest boundary(b) voxel."""
    _check_comparable(a, b)
    ba, bb = boundary_mask(a), boundary_mask(b)
    if method not in ("auto", "brute", "edt"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto":
        pairs = int(np.count_nonzero(ba)) * int(np.count_nonzero(bb))
        method = "brute" if pairs <= _BRUTE_FORCE_LIMIT else "edt"
    if method == "brute":
        scale = np.asarray(a.spacing, dtype=np.float64)
        return _directed_brute(np.argwhere(ba) * scale, np.argwhere(bb) * scale)
    return _directed_edt(ba, bb, a.spacing)


def hausdorff(a: BinaryMask, b: BinaryMask, method: str = "auto") -> float:
    """Exact symmetric Hausdorff distance in millimetres."""
    return max(directed_hausdorff(a, b, method), directed_hausdorff(b, a, method))


# report aggregation ---------------------------------------------------------

@dataclass(frozen=True)
class CaseEval:
    case_id: str
    tags: tuple[str, ...]
    dice: float
    hd_mm: float | None


@dataclass(frozen=True)
class GroupStats:
    dice_mean: float
    hd_mean: float | None
    n: int


@dataclass(frozen=True)
class EvalReport:
    """Per-case metrics plus arithmetic group means (one group per tag,
    plus the synthetic ``all`` group covering every case)."""

    cases: tuple[CaseEval, ...]
    groups: dict[str, GroupStats]

    def to_json_dict(self) -> dict:
        return {
            "cases": [
                {
                    "id": c.case_id,
                    "dice": c.dice,
                    "hd_mm": c.hd_mm,
                    "tags": list(c.tags),
                }
                for c in self.cases
            ],
            "groups": {
                name: {"dice_mean": g.dice_mean, "hd_mean": g.hd_mean, "n": g.n}
                for name, g in sorted(self.groups.items())
            },
        }

    def to_text_table(self) -> str:
        width = max(len("group"), *(len(name) for name in self.groups))
        lines = [f"{'group':<{width}}  {'n':>4}  {'dice_mean':>10}  {'hd_mean':>10}"]
        for name in sorted(self.groups, key=lambda g: (g != "all", g)):
            g = self.groups[name]
            hd = f"{g.hd_mean:.4f}" if g.hd_mean is not None else "-"
            lines.append(f"{name:<{width}}  {g.n:>4}  {g.dice_mean:>10.4f}  {hd:>10}")
        return "\n".join(lines) + "\n"


def aggregate_report(cases) -> EvalReport:
    """Aggregate (case_id, tags, dice, hd_mm) rows into the report shape.

    Group HD means skip cases whose HD is undefined (``None``); a group of
    only undefined HDs reports ``None``.
    """
    evaluated = tuple(
        CaseEval(case_id, tuple(tags), float(d), None if hd is None else float(hd))
        for case_id, tags, d, hd in cases
    )
    if not evaluated:
        raise ValueError("cannot aggregate an empty case list")
    members: dict[str, list[CaseEval]] = {"all": list(evaluated)}
    for case in evaluated:
        for tag in case.tags:
            members.setdefault(tag, []).append(case)
    groups = {}
    for name, group_cases in members.items():
        defined_hd = [c.hd_mm for c in group_cases if c.hd_mm is not None]
        groups[name] = GroupStats(
            dice_mean=float(np.mean([c.dice for c in group_cases])),
            hd_mean=float(np.mean(defined_hd)) if defined_hd else None,
            n=len(group_cases),
        )
    return EvalReport(cases=evaluated, groups=groups)
