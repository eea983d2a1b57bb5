"""Deterministic generator of desk-scale synthetic volumetric datasets.

Each case is a drifting, radius-varying ellipse stack: per frame the mask
is the exact indicator of an ellipse whose centre drifts and whose radii
interpolate between two sampled values, so neighbouring frames are
coherent but not identical.  Intensities are the two class means plus
seeded Gaussian noise.

Layout written under the output root::

    volumes/<case>.{json,raw}    every case (labelled, unlabelled, test)
    labels/<case>.{json,raw}     ground-truth masks of labelled cases only
    _truth/<case>.{json,raw}     sealed ground truth for every case
    manifest.json                labelled + unlabelled entries
    test_cases.json              held-out test volumes, for inference

The pipeline must never read ``_truth``; it exists for the evaluator.

Per-case randomness is a SplitMix64 stream seeded with
``derive_seed(spec.seed, ordinal)``: seven uniform draws fix the geometry
(centre y, centre x, drift angle, first/last radius, aspect, drift scale),
then one Gaussian block of D*H*W values supplies the noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import BadSpecError
from .manifest import DatasetManifest, parse_manifest
from .rng import SplitMix64, derive_seed
from .volumes import BinaryMask, VoxelVolume, load_volume, save_volume

_CENTER_MARGIN = 2.0


@dataclass(frozen=True)
class SynthSpec:
    """Knobs of the generator; see the module docstring for their meaning."""

    seed: int
    labelled: int = 2
    unlabelled: int = 10
    test: int = 2
    shape: tuple[int, int, int] = (8, 16, 16)
    drift: float = 1.0
    radius_range: tuple[float, float] = (3.0, 6.0)
    fg_mean: float = 1.0
    bg_mean: float = 0.0
    noise: float = 0.1
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        object.__setattr__(self, "radius_range", tuple(float(r) for r in self.radius_range))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        if len(self.shape) != 3 or any(d < 8 for d in self.shape):
            raise BadSpecError(f"volume shape must be >= 8 per axis, got {self.shape}")
        if self.labelled < 1 or self.unlabelled < 1 or self.test < 0:
            raise BadSpecError(
                "need labelled >= 1, unlabelled >= 1 and test >= 0, got "
                f"{self.labelled}/{self.unlabelled}/{self.test}"
            )
        if self.fg_mean == self.bg_mean:
            raise BadSpecError("foreground and background means must differ")
        if self.noise < 0:
            raise BadSpecError(f"noise level must be >= 0, got {self.noise}")
        if self.drift < 0:
            raise BadSpecError(f"drift must be >= 0, got {self.drift}")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise BadSpecError(f"radius range must satisfy 0 < lo <= hi, got {self.radius_range}")
        if any(not s > 0 for s in self.spacing):
            raise BadSpecError(f"spacing must be positive, got {self.spacing}")

    @classmethod
    def from_json_dict(cls, payload: dict) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise BadSpecError(f"unknown spec keys: {sorted(unknown)}")
        if "seed" not in payload:
            raise BadSpecError("spec needs a seed")
        try:
            return cls(**payload)
        except TypeError as e:
            raise BadSpecError(f"bad spec: {e}") from e


def _case_ids(spec: SynthSpec) -> list[tuple[str, str]]:
    """(role, case_id) in generation order: labelled, unlabelled, test."""
    out = [("labelled", f"lab_{i:03d}") for i in range(spec.labelled)]
    out += [("unlabelled", f"unl_{i:03d}") for i in range(spec.unlabelled)]
    out += [("test", f"tst_{i:03d}") for i in range(spec.test)]
    return out


def _generate_case(spec: SynthSpec, case_seed: int) -> tuple[VoxelVolume, BinaryMask]:
    depth, height, width = spec.shape
    rng = SplitMix64(case_seed)
    u = rng.next_floats(7)
    cy0 = (0.3 + 0.4 * u[0]) * (height - 1)
    cx0 = (0.3 + 0.4 * u[1]) * (width - 1)
    angle = 2.0 * math.pi * u[2]
    lo, hi = spec.radius_range
    r_first = lo + u[3] * (hi - lo)
    r_last = lo + u[4] * (hi - lo)
    aspect = 0.75 + 0.5 * u[5]
    step = spec.drift * u[6]

    yy = np.arange(height, dtype=np.float64)[:, None]
    xx = np.arange(width, dtype=np.float64)[None, :]
    mask = np.zeros(spec.shape, dtype=np.uint8)
    for t in range(depth):
        s = t / (depth - 1) if depth > 1 else 0.0
        radius = r_first + s * (r_last - r_first)
        ry, rx = radius * aspect, radius / aspect
        cy = float(np.clip(cy0 + t * step * math.sin(angle), _CENTER_MARGIN, height - 1 - _CENTER_MARGIN))
        cx = float(np.clip(cx0 + t * step * math.cos(angle), _CENTER_MARGIN, width - 1 - _CENTER_MARGIN))
        inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        mask[t] = inside.astype(np.uint8)

    intensity = spec.bg_mean + (spec.fg_mean - spec.bg_mean) * mask.astype(np.float64)
    if spec.noise > 0:
        noise = rng.next_gaussians(mask.size).reshape(spec.shape)
        intensity = intensity + spec.noise * noise
    return (
        VoxelVolume(intensity.astype(np.float32), spec.spacing),
        BinaryMask(mask, spec.spacing),
    )


def generate(spec: SynthSpec, root) -> DatasetManifest:
    """Write the full dataset under ``root``; returns the parsed manifest."""
    root = Path(root)
    manifest_doc = {"labelled": [], "unlabelled": []}
    test_doc = {"cases": []}
    for ordinal, (role, case_id) in enumerate(_case_ids(spec)):
        volume, mask = _generate_case(spec, derive_seed(spec.seed, ordinal))
        save_volume(volume, root / "volumes" / case_id)
        save_volume(mask, root / "_truth" / case_id)
        if role == "labelled":
            save_volume(mask, root / "labels" / case_id)
            manifest_doc["labelled"].append(
                {"id": case_id, "image": f"volumes/{case_id}", "mask": f"labels/{case_id}"}
            )
        elif role == "unlabelled":
            manifest_doc["unlabelled"].append({"id": case_id, "image": f"volumes/{case_id}"})
        else:
            test_doc["cases"].append({"id": case_id, "image": f"volumes/{case_id}"})
    (root / "manifest.json").write_text(json.dumps(manifest_doc, indent=2, sort_keys=True) + "\n")
    (root / "test_cases.json").write_text(json.dumps(test_doc, indent=2, sort_keys=True) + "\n")
    return parse_manifest(root / "manifest.json")


def load_truth(root) -> dict[str, BinaryMask]:
    """Sealed ground-truth masks for every generated case, keyed by id."""
    truth_dir = Path(root) / "_truth"
    return {
        p.stem: load_volume(p, kind="mask") for p in sorted(truth_dir.glob("*.json"))
    }
