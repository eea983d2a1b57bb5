"""Freeze golden fixtures for the external-segmenter subprocess protocol.

Each fixture is one request directory exactly as ``ExternalSegmenter``
writes it, plus the response an interchangeable backend must produce for
it.  The request dirs are not hand-mocked: this script points a real
``ExternalSegmenter`` at a tiny responder subprocess that snapshots the
request directory before answering, so the frozen bytes are whatever the
engine's protocol client actually emits.

Layout, under frontend/tests/fixtures/protocol/:

    cases.json                  list of {name, kind} entries
    case_NN/request/            request.json + volume blobs (+ model/ for
                                predict requests)
    case_NN/expected/           response.json and, depending on kind,
                                logits/probs blobs or model/stub_model.json

Absolute paths cannot survive freezing, so the ``model`` field in fit and
predict requests is rewritten to ``__REQUEST_DIR__/model``; consumers must
substitute the actual request directory before serving.  Expected volume
payloads (.raw) are compared byte-for-byte; JSON files are compared after
parsing, since float formatting is serializer-specific.  An expected error
response carries no ``message`` key: any non-empty message is acceptable.

Expected outputs come from the pinned stub semantics:

* propagate: nearest-prompt mask carryover at full confidence, i.e. the
  reference propagator with decay pinned to 1.0,
* fit: global mean-threshold model, cut = (mean(fg) + mean(bg)) / 2
  accumulated pair by pair in C order as float64,
* predict: probability 0.75 where voxel >= cut else 0.25, as float32.

Run from the repository root:  python3 scripts/gen_protocol_fixtures.py
"""

import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from sslprop.backends import ExternalSegmenter, NearestPromptPropagator
from sslprop.backends.base import PropagationRequest
from sslprop.volumes import BinaryMask, VoxelVolume, save_volume

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURE_ROOT = REPO_ROOT / "frontend" / "tests" / "fixtures" / "protocol"
PLACEHOLDER = "__REQUEST_DIR__"
STUB_MODEL_FILE = "stub_model.json"

RESPONDER = '''\
"""Snapshot the request dir to $FIXTURE_DST, then answer minimally."""
import json, os, shutil, sys
from pathlib import Path

import numpy as np

from sslprop.volumes import ProbVolume, VoxelVolume, load_volume, save_volume

request_dir = Path(sys.argv[-1])
shutil.copytree(request_dir, os.environ["FIXTURE_DST"])
request = json.loads((request_dir / "request.json").read_text())
if request["kind"] == "fit":
    response = {"status": "ok", "model": request["model"]}
else:
    frames = load_volume(request_dir / request["frames"])
    zeros = np.zeros(frames.shape, dtype=np.float32)
    cls = VoxelVolume if request["kind"] == "propagate" else ProbVolume
    save_volume(cls(zeros, frames.spacing), request_dir / "out")
    key = "logits" if request["kind"] == "propagate" else "probs"
    response = {"status": "ok", key: "out"}
(request_dir / "response.json").write_text(json.dumps(response))
'''


def compact_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"


def stub_cut(pairs) -> float:
    """Sequential float64 mean-threshold, the fit oracle for the stub."""
    sum_fg = sum_bg = 0.0
    n_fg = n_bg = 0
    for volume, mask in pairs:
        values = volume.data.ravel(order="C").tolist()
        labels = mask.data.ravel(order="C").tolist()
        for value, label in zip(values, labels):
            if label:
                sum_fg += value
                n_fg += 1
            else:
                sum_bg += value
                n_bg += 1
    if n_fg == 0 or n_bg == 0:
        raise ValueError("fixture training pairs must contain both classes")
    return (sum_fg / n_fg + sum_bg / n_bg) / 2.0


def stub_probs(volume: VoxelVolume, cut: float) -> np.ndarray:
    return np.where(volume.data.astype(np.float64) >= cut, 0.75, 0.25).astype(np.float32)


def random_volume(rng, shape, spacing, lo=-50.0, hi=150.0) -> VoxelVolume:
    data = (lo + (hi - lo) * rng.random(shape)).astype(np.float32)
    return VoxelVolume(data, spacing)


def random_mask(rng, shape, spacing, density=0.4) -> BinaryMask:
    return BinaryMask((rng.random(shape) < density).astype(np.uint8), spacing)


class Harvester:
    """Runs the protocol client with the snapshotting responder."""

    def __init__(self, workdir: Path):
        responder = workdir / "responder.py"
        responder.write_text(RESPONDER)
        self.client = ExternalSegmenter(command=[sys.executable, str(responder)])
        self.workdir = workdir

    def run(self, destination: Path, call):
        os.environ["FIXTURE_DST"] = str(destination)
        try:
            call(self.client)
        finally:
            del os.environ["FIXTURE_DST"]


def rewrite_model_field(request_dir: Path) -> None:
    request_path = request_dir / "request.json"
    request = json.loads(request_path.read_text())
    request["model"] = f"{PLACEHOLDER}/model"
    request_path.write_text(compact_json(request))


def freeze_propagate(harvester, case_dir, frames, prompt_frames, prompt_masks):
    request = PropagationRequest(
        frames=frames, prompt_frames=prompt_frames, prompt_masks=prompt_masks
    )
    harvester.run(case_dir / "request", lambda c: c.propagate(request))
    expected = case_dir / "expected"
    expected.mkdir(parents=True)
    logits = NearestPromptPropagator(decay=1.0).propagate(request)
    save_volume(VoxelVolume(logits, frames.spacing), expected / "logits")
    (expected / "response.json").write_text(
        compact_json({"logits": "logits", "status": "ok"})
    )


def freeze_fit(harvester, case_dir, pairs):
    volumes = [v for v, _ in pairs]
    masks = [m for _, m in pairs]
    model_dir = harvester.workdir / f"{case_dir.name}-model"
    harvester.run(
        case_dir / "request",
        lambda c: c.fit(volumes, masks, model_dir=model_dir),
    )
    rewrite_model_field(case_dir / "request")
    expected = case_dir / "expected"
    (expected / "model").mkdir(parents=True)
    (expected / "model" / STUB_MODEL_FILE).write_text(
        compact_json({"cut": stub_cut(pairs), "kind": "stub-threshold"})
    )
    (expected / "response.json").write_text(
        compact_json({"model": f"{PLACEHOLDER}/model", "status": "ok"})
    )


def freeze_predict(harvester, case_dir, frames, cut):
    model_src = harvester.workdir / f"{case_dir.name}-model"
    model_src.mkdir()
    weights = compact_json({"cut": cut, "kind": "stub-threshold"})
    (model_src / STUB_MODEL_FILE).write_text(weights)
    client = harvester.client
    client.model_ref_ = str(model_src)
    harvester.run(case_dir / "request", lambda c: c.predict_proba(frames))
    del client.model_ref_
    rewrite_model_field(case_dir / "request")
    request_model = case_dir / "request" / "model"
    request_model.mkdir()
    (request_model / STUB_MODEL_FILE).write_text(weights)
    expected = case_dir / "expected"
    expected.mkdir(parents=True)
    probs = stub_probs(frames, cut)
    save_volume(VoxelVolume(probs, frames.spacing), expected / "probs")
    (expected / "response.json").write_text(
        compact_json({"probs": "probs", "status": "ok"})
    )


def freeze_error(case_dir, request_payload, blobs):
    request_dir = case_dir / "request"
    request_dir.mkdir(parents=True)
    (request_dir / "request.json").write_text(compact_json(request_payload))
    for stem, volume in blobs.items():
        save_volume(volume, request_dir / stem)
    expected = case_dir / "expected"
    expected.mkdir(parents=True)
    (expected / "response.json").write_text(compact_json({"status": "error"}))


def propagate_specs(rng):
    """(shape, spacing, prompt_frames, mask_builder) per propagate case."""

    def masks(shape, spacing, count, density=0.4):
        return random_mask(rng, (count,) + shape[1:], spacing, density)

    specs = []
    cases = [
        ((1, 4, 4), (1.0, 1.0, 1.0), (0,), 0.4),
        ((2, 4, 5), (1.0, 1.0, 1.0), (0,), 0.4),
        ((3, 5, 5), (2.0, 0.5, 0.5), (2,), 0.4),
        ((4, 4, 4), (1.0, 1.0, 1.0), (1,), 0.5),
        ((5, 4, 4), (1.5, 0.8, 0.8), (0, 4), 0.4),
        ((5, 5, 4), (1.0, 1.0, 1.0), (1, 2), 0.4),
        ((6, 4, 4), (1.0, 0.7, 0.7), (0, 2, 4), 0.3),
        ((3, 4, 4), (1.0, 1.0, 1.0), (0, 1, 2), 0.5),
        ((4, 5, 5), (1.0, 1.0, 1.0), (0,), 0.0),
        ((4, 4, 4), (2.5, 1.0, 1.0), (3,), 1.1),
        ((5, 4, 4), (1.0, 1.0, 1.0), (2, 0), 0.4),
        ((6, 5, 7), (3.0, 0.6, 0.9), (0, 5), 0.4),
    ]
    for shape, spacing, prompts, density in cases:
        frames = random_volume(rng, shape, spacing)
        prompt_masks = masks(shape, spacing, len(prompts), density)
        specs.append((frames, prompts, prompt_masks))
    return specs


def main() -> None:
    if FIXTURE_ROOT.exists():
        shutil.rmtree(FIXTURE_ROOT)
    FIXTURE_ROOT.mkdir(parents=True)
    rng = np.random.default_rng(20260823)
    cases = []

    with tempfile.TemporaryDirectory(prefix="protocol-fixtures-") as tmp:
        harvester = Harvester(Path(tmp))

        for frames, prompts, prompt_masks in propagate_specs(rng):
            name = f"case_{len(cases):02d}"
            freeze_propagate(harvester, FIXTURE_ROOT / name, frames, prompts, prompt_masks)
            cases.append({"kind": "propagate", "name": name})

        fit_suites = [
            [((2, 3, 4), (1.0, 1.0, 1.0))],
            [((2, 3, 4), (1.0, 1.0, 1.0)), ((1, 4, 4), (2.0, 0.5, 0.5))],
            [((2, 4, 4), (1.0, 1.0, 1.0))] * 3,
        ]
        for suite in fit_suites:
            name = f"case_{len(cases):02d}"
            pairs = []
            for shape, spacing in suite:
                volume = random_volume(rng, shape, spacing)
                labels = (rng.random(shape) < 0.5).astype(np.uint8)
                if labels.sum() in (0, labels.size):
                    labels[(0,) * 3] = 1 - labels[(0,) * 3]
                pairs.append((volume, BinaryMask(labels, spacing)))
            freeze_fit(harvester, FIXTURE_ROOT / name, pairs)
            cases.append({"kind": "fit", "name": name})

        predict_specs = [
            ((2, 4, 4), (1.0, 1.0, 1.0), 0.5),
            ((3, 4, 5), (2.0, 0.8, 0.8), -3.0),
            ((1, 6, 6), (1.0, 1.0, 1.0), 0.37109375),
        ]
        for shape, spacing, cut in predict_specs:
            name = f"case_{len(cases):02d}"
            data = (-10.0 + 20.0 * rng.random(shape)).astype(np.float32)
            # plant one voxel exactly on the cut to pin >= semantics
            data[(0,) * 3] = np.float32(cut)
            frames = VoxelVolume(data, spacing)
            freeze_predict(harvester, FIXTURE_ROOT / name, frames, cut)
            cases.append({"kind": "predict", "name": name})

    shape, spacing = (2, 4, 4), (1.0, 1.0, 1.0)
    err_rng = np.random.default_rng(7)
    name = f"case_{len(cases):02d}"
    freeze_error(
        FIXTURE_ROOT / name,
        {"frames": "frames", "kind": "segment"},
        {"frames": random_volume(err_rng, shape, spacing)},
    )
    cases.append({"kind": "error", "name": name})

    name = f"case_{len(cases):02d}"
    freeze_error(
        FIXTURE_ROOT / name,
        {
            "frames": "frames",
            "kind": "propagate",
            "prompt_frames": [0],
            "prompt_masks": "prompt_masks",
        },
        {"prompt_masks": random_mask(err_rng, (1,) + shape[1:], spacing)},
    )
    cases.append({"kind": "error", "name": name})

    (FIXTURE_ROOT / "cases.json").write_text(json.dumps(cases, indent=1) + "\n")
    print(f"froze {len(cases)} protocol fixtures under {FIXTURE_ROOT}")


if __name__ == "__main__":
    main()
