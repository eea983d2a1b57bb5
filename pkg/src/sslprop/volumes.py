"""Grid types, the portable MVOL volume format, and in-plane resizing.

An MVOL volume is a pair of files sharing a stem: ``<stem>.json`` (header)
and ``<stem>.raw`` (blob).  The header carries::

    {"mvol": 1, "dtype": "f32" | "u8", "shape": [D, H, W],
     "spacing_mm": [sz, sy, sx], "order": "C", "endian": "LE"}

The blob is the contiguous C-order (frame-major) little-endian voxel data:
``u8`` for binary masks, ``f32`` for intensities and probabilities.  Saving
and loading round-trips bit-exactly.

Three value types share this format:

* :class:`VoxelVolume`  - finite float32 intensities,
* :class:`BinaryMask`   - values restricted to {0, 1}, stored as u8,
* :class:`ProbVolume`   - float32 probabilities in [0, 1].

All three are immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import (
    InvariantViolationError,
    MalformedHeaderError,
    MissingFileError,
    SizeMismatchError,
    VolumeIoError,
)

Spacing = tuple[float, float, float]

_HEADER_FIELDS = ("mvol", "dtype", "shape", "spacing_mm", "order", "endian")


def _check_grid(data: np.ndarray, spacing: Spacing) -> None:
    if data.ndim != 3:
        raise InvariantViolationError(f"expected a 3-d grid, got ndim={data.ndim}")
    if min(data.shape) < 1:
        raise InvariantViolationError(f"all dimensions must be >= 1, got {data.shape}")
    if len(spacing) != 3 or any(not (s > 0) for s in spacing):
        raise InvariantViolationError(f"spacing components must be > 0, got {spacing}")


@dataclass(frozen=True, eq=False)
class VoxelVolume:
    """3-d scalar intensity grid with physical voxel spacing in mm.

    ``data`` is float32 with shape (D, H, W): frame count, rows, columns.
    """

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        _check_grid(arr, self.spacing)
        if not np.all(np.isfinite(arr)):
            raise InvariantViolationError("intensities must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return (
            type(other) is type(self)
            and self.spacing == other.spacing
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """3-d {0, 1} grid aligned with a :class:`VoxelVolume`."""

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data)
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        elif arr.dtype != np.uint8:
            cast = arr.astype(np.uint8, copy=True)
            if not np.array_equal(cast, arr):
                raise InvariantViolationError("mask values must be exactly 0 or 1")
            arr = cast
        _check_grid(arr, self.spacing)
        if arr.size and int(arr.max()) > 1:
            raise InvariantViolationError("mask values must be exactly 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.data))

    def __eq__(self, other) -> bool:
        return (
            type(other) is type(self)
            and self.spacing == other.spacing
            and np.array_equal(self.data, other.data)
        )


@dataclass(frozen=True, eq=False)
class ProbVolume:
    """3-d float32 probability grid, every value in [0, 1]."""

    data: np.ndarray
    spacing: Spacing = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        _check_grid(arr, self.spacing)
        if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) > 1.0 or not np.all(np.isfinite(arr))):
            raise InvariantViolationError("probabilities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other) -> bool:
        return (
            type(other) is type(self)
            and self.spacing == other.spacing
            and np.array_equal(self.data, other.data)
        )


Volume = Union[VoxelVolume, BinaryMask, ProbVolume]


# MVOL I/O -------------------------------------------------------------------

def volume_stem(path) -> Path:
    """Normalize a volume path: accepts the stem, the .json or the .raw file."""
    p = Path(path)
    if p.suffix in (".json", ".raw"):
        return p.with_suffix("")
    return p


def read_header(path) -> dict:
    """Parse and validate an MVOL header without touching the blob."""
    stem = volume_stem(path)
    header_path = stem.with_suffix(".json")
    if not header_path.is_file():
        raise MissingFileError(f"missing volume header: {header_path}")
    try:
        header = json.loads(header_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedHeaderError(f"unreadable header {header_path}: {e}") from e
    if not isinstance(header, dict) or any(k not in header for k in _HEADER_FIELDS):
        raise MalformedHeaderError(f"header {header_path} misses required fields")
    if header["mvol"] != 1:
        raise MalformedHeaderError(f"unsupported mvol version {header['mvol']!r}")
    if header["dtype"] not in ("f32", "u8"):
        raise MalformedHeaderError(f"unsupported dtype {header['dtype']!r}")
    if header["order"] != "C" or header["endian"] != "LE":
        raise MalformedHeaderError("only C-order little-endian volumes are supported")
    shape = header["shape"]
    if (
        not isinstance(shape, list)
        or len(shape) != 3
        or any(not isinstance(d, int) or d < 1 for d in shape)
    ):
        raise MalformedHeaderError(f"bad shape {shape!r} in {header_path}")
    spacing = header["spacing_mm"]
    if not isinstance(spacing, list) or len(spacing) != 3 or any(not (float(s) > 0) for s in spacing):
        raise MalformedHeaderError(f"bad spacing {spacing!r} in {header_path}")
    return header


def load_volume(path, kind: str | None = None) -> Volume:
    """Load an MVOL pair from disk.

    Args:
        path: volume stem, header path or blob path.
        kind: optional expected type: "image", "mask" or "prob".  Without
            it, u8 blobs load as :class:`BinaryMask` and f32 blobs as
            :class:`VoxelVolume`; loading a :class:`ProbVolume` requires
            ``kind="prob"``.

    Raises:
        MissingFileError, MalformedHeaderError, SizeMismatchError,
        InvariantViolationError.
    """
    if kind not in (None, "image", "mask", "prob"):
        raise ValueError(f"unknown kind {kind!r}")
    stem = volume_stem(path)
    header = read_header(stem)
    raw_path = stem.with_suffix(".raw")
    if not raw_path.is_file():
        raise MissingFileError(f"missing volume blob: {raw_path}")
    blob = raw_path.read_bytes()
    shape = tuple(header["shape"])
    spacing = tuple(float(s) for s in header["spacing_mm"])
    dtype = np.dtype("<f4") if header["dtype"] == "f32" else np.dtype("u1")
    expected = dtype.itemsize * shape[0] * shape[1] * shape[2]
    if len(blob) != expected:
        raise SizeMismatchError(
            f"{raw_path}: blob is {len(blob)} bytes, header implies {expected}"
        )
    arr = np.frombuffer(blob, dtype=dtype).reshape(shape)
    if header["dtype"] == "u8":
        if kind in ("image", "prob"):
            raise InvariantViolationError(f"{stem}: u8 blob cannot hold {kind} data")
        return BinaryMask(arr, spacing)
    if kind == "mask":
        raise InvariantViolationError(f"{stem}: f32 blob cannot hold mask data")
    if kind == "prob":
        return ProbVolume(arr, spacing)
    return VoxelVolume(arr, spacing)


def save_volume(volume: Volume, path) -> Path:
    """Write an MVOL pair; returns the stem.

    The header JSON is serialized with sorted keys and no whitespace so
    identical volumes always produce identical bytes.
    """
    stem = volume_stem(path)
    if isinstance(volume, BinaryMask):
        dtype_name, cast = "u8", volume.data.astype("u1", copy=False)
    elif isinstance(volume, ProbVolume) or isinstance(volume, VoxelVolume):
        dtype_name, cast = "f32", volume.data.astype("<f4", copy=False)
    else:
        raise TypeError(f"not a volume type: {type(volume)!r}")
    header = {
        "mvol": 1,
        "dtype": dtype_name,
        "shape": [int(d) for d in volume.shape],
        "spacing_mm": [float(s) for s in volume.spacing],
        "order": "C",
        "endian": "LE",
    }
    try:
        stem.parent.mkdir(parents=True, exist_ok=True)
        stem.with_suffix(".json").write_text(
            json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n"
        )
        stem.with_suffix(".raw").write_bytes(cast.tobytes(order="C"))
    except OSError as e:
        raise VolumeIoError(f"cannot write volume {stem}: {e}") from e
    return stem


# In-plane resizing ----------------------------------------------------------

def _source_coords(target: int, source: int) -> np.ndarray:
    """Pixel-center mapping  src = (dst + 0.5) * S / T - 0.5."""
    return (np.arange(target, dtype=np.float64) + 0.5) * (source / target) - 0.5


def _bilinear_axis(target: int, source: int):
    src = _source_coords(target, source)
    i0 = np.floor(src).astype(np.int64)
    w = src - i0
    i1 = np.clip(i0 + 1, 0, source - 1)
    i0 = np.clip(i0, 0, source - 1)
    return i0, i1, w


def _nearest_axis(target: int, source: int) -> np.ndarray:
    # round half toward the lower source index
    idx = np.ceil(_source_coords(target, source) - 0.5).astype(np.int64)
    return np.clip(idx, 0, source - 1)


def _resize_bilinear(data: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    th, tw = target_hw
    _, h, w = data.shape
    y0, y1, wy = _bilinear_axis(th, h)
    x0, x1, wx = _bilinear_axis(tw, w)
    v = data.astype(np.float64, copy=False)
    wy = wy[None, :, None]
    wx = wx[None, None, :]
    top = (1.0 - wx) * v[:, y0][:, :, x0] + wx * v[:, y0][:, :, x1]
    bot = (1.0 - wx) * v[:, y1][:, :, x0] + wx * v[:, y1][:, :, x1]
    return ((1.0 - wy) * top + wy * bot).astype(np.float32)


def _resize_nearest(data: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    iy = _nearest_axis(target_hw[0], data.shape[1])
    ix = _nearest_axis(target_hw[1], data.shape[2])
    return data[:, iy][:, :, ix]


def resize_inplane(volume: Volume, target_hw: tuple[int, int]) -> Volume:
    """Resample every frame to the target (H, W), keeping the frame count.

    Intensities and probabilities are interpolated bilinearly with the
    pixel-center mapping ``src = (dst + 0.5) * S / T - 0.5`` and edge
    clamping; masks use nearest-neighbour with ties rounded toward the
    lower source index.  Probabilities are re-clamped to [0, 1].  Spacing
    is carried through unchanged.
    """
    th, tw = int(target_hw[0]), int(target_hw[1])
    if th < 1 or tw < 1:
        raise InvariantViolationError(f"target size must be >= 1, got {(th, tw)}")
    if (th, tw) == volume.shape[1:]:
        return volume
    if isinstance(volume, BinaryMask):
        return BinaryMask(_resize_nearest(volume.data, (th, tw)), volume.spacing)
    resized = _resize_bilinear(volume.data, (th, tw))
    if isinstance(volume, ProbVolume):
        return ProbVolume(np.clip(resized, 0.0, 1.0), volume.spacing)
    return VoxelVolume(resized, volume.spacing)
