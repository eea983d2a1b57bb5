"""Shared factories for building tiny datasets on disk."""

import json

import numpy as np

from sslprop.volumes import BinaryMask, VoxelVolume, save_volume


def make_volume(shape=(3, 4, 4), value=0.0, spacing=(1.0, 1.0, 1.0)):
    return VoxelVolume(np.full(shape, value, dtype=np.float32), spacing)


def make_mask(shape=(3, 4, 4), fg=None, spacing=(1.0, 1.0, 1.0)):
    data = np.zeros(shape, dtype=np.uint8)
    if fg is not None:
        for idx in fg:
            data[idx] = 1
    return BinaryMask(data, spacing)


def write_manifest(root, labelled, unlabelled):
    """Write volumes plus a manifest file; entries are (case_id, volume[, mask])."""
    root.mkdir(parents=True, exist_ok=True)
    doc = {"labelled": [], "unlabelled": []}
    for case_id, volume, mask in labelled:
        save_volume(volume, root / "volumes" / case_id)
        save_volume(mask, root / "labels" / case_id)
        doc["labelled"].append(
            {"id": case_id, "image": f"volumes/{case_id}", "mask": f"labels/{case_id}"}
        )
    for entry in unlabelled:
        case_id, volume = entry[0], entry[1]
        vendor = entry[2] if len(entry) > 2 else None
        save_volume(volume, root / "volumes" / case_id)
        item = {"id": case_id, "image": f"volumes/{case_id}"}
        if vendor is not None:
            item["vendor"] = vendor
        doc["unlabelled"].append(item)
    path = root / "manifest.json"
    path.write_text(json.dumps(doc, indent=1))
    return path
