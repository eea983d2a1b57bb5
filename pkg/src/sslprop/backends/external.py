"""Subprocess client for external segmenter backends.

One invocation per request: the client materializes a request directory
(``request.json`` plus MVOL blobs), runs the configured command with that
directory as its sole argument, and reads back ``response.json`` plus
result blobs.  Any process failure, timeout or malformed response surfaces
as :class:`BackendError` / :class:`BackendTimeoutError`; the offending
request directory is left in place for inspection.

Calls on one client instance are serialized; spawn several clients for
parallelism.
"""

from __future__ import annotations

import json
import shlex
import shutil
import subprocess
import tempfile
import threading
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from ..errors import BackendError, BackendTimeoutError, PipelineError
from ..validation import check_fitted, check_training_set
from ..volumes import ProbVolume, VoxelVolume, load_volume, save_volume
from .base import PropagationRequest

MODEL_MARKER = "model.json"
_STDERR_TAIL = 500


class ExternalSegmenter(BaseEstimator):
    """Client for a segmenter living behind the subprocess protocol.

    The same client class covers both backend roles; which requests the
    external tool actually understands is its own affair.

    Args:
        command: argv prefix of the backend (list, or string to be split);
            the request directory path is appended as the last argument.
        workdir: directory for transient request directories; ``None``
            falls back to the system temp directory.
        timeout: seconds to wait per invocation; ``None`` waits forever.
        keep_request_dirs: keep request directories of successful calls
            (failed calls always keep theirs).
    """

    def __init__(self, command, workdir=None, timeout=None, keep_request_dirs=False):
        self.command = command
        self.workdir = workdir
        self.timeout = timeout
        self.keep_request_dirs = keep_request_dirs
        self._lock = threading.Lock()

    # protocol plumbing ------------------------------------------------------

    def _argv(self, request_dir: Path) -> list[str]:
        base = shlex.split(self.command) if isinstance(self.command, str) else list(self.command)
        return [str(a) for a in base] + [str(request_dir)]

    def _run(self, request: dict, volumes: dict) -> tuple[dict, Path]:
        """Write one request directory, invoke the backend, parse the response."""
        workdir = Path(self.workdir) if self.workdir is not None else Path(tempfile.gettempdir())
        workdir.mkdir(parents=True, exist_ok=True)
        request_dir = Path(tempfile.mkdtemp(prefix=request["kind"] + "-", dir=workdir))
        for stem, volume in volumes.items():
            save_volume(volume, request_dir / stem)
        (request_dir / "request.json").write_text(
            json.dumps(request, sort_keys=True, separators=(",", ":")) + "\n"
        )
        argv = self._argv(request_dir)
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=self.timeout
            )
        except subprocess.TimeoutExpired:
            raise BackendTimeoutError(
                f"backend {argv[0]} exceeded {self.timeout}s (request in {request_dir})"
            ) from None
        except OSError as e:
            raise BackendError(f"cannot run backend {argv[0]}: {e}") from e
        if proc.returncode != 0:
            raise BackendError(
                f"backend exited with exit code {proc.returncode} "
                f"(request in {request_dir}): {proc.stderr[-_STDERR_TAIL:].strip()}"
            )
        response_path = request_dir / "response.json"
        if not response_path.is_file():
            raise BackendError(f"backend wrote no response.json in {request_dir}")
        try:
            response = json.loads(response_path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise BackendError(f"unreadable response in {request_dir}: {e}") from e
        status = response.get("status") if isinstance(response, dict) else None
        if status == "error":
            raise BackendError(
                f"backend reported an error: {response.get('message', '(no message)')}"
            )
        if status != "ok":
            raise BackendError(f"bad response status {status!r} in {request_dir}")
        return response, request_dir

    def _response_stem(self, response: dict, key: str, request_dir: Path) -> Path:
        value = response.get(key)
        if not isinstance(value, str) or not value:
            raise BackendError(f"response misses the {key!r} stem (in {request_dir})")
        path = Path(value)
        return path if path.is_absolute() else request_dir / path

    def _cleanup(self, request_dir: Path) -> None:
        if not self.keep_request_dirs:
            shutil.rmtree(request_dir, ignore_errors=True)

    # backend operations -----------------------------------------------------

    def propagate(self, request: PropagationRequest) -> np.ndarray:
        payload = {
            "kind": "propagate",
            "frames": "frames",
            "prompt_frames": list(request.prompt_frames),
            "prompt_masks": "prompt_masks",
        }
        with self._lock:
            response, request_dir = self._run(
                payload, {"frames": request.frames, "prompt_masks": request.prompt_masks}
            )
            stem = self._response_stem(response, "logits", request_dir)
            try:
                logits = load_volume(stem)
            except PipelineError as e:
                raise BackendError(f"bad logits volume from backend: {e}") from e
            if not isinstance(logits, VoxelVolume):
                raise BackendError(f"logits at {stem} are not an f32 volume")
            if logits.shape != request.frames.shape:
                raise BackendError(
                    f"logits shape {logits.shape} does not match "
                    f"request frames {request.frames.shape}"
                )
            self._cleanup(request_dir)
            return logits.data

    def fit(self, volumes, masks, model_dir=None) -> "ExternalSegmenter":
        """Ask the backend to train on the pairs; remembers the model handle.

        With ``model_dir`` the backend is asked to persist its model below
        that directory, and a marker file is written so :meth:`load` can
        restore the handle later.
        """
        volumes, masks = check_training_set(volumes, masks)
        payload_volumes, pairs = {}, []
        for i, (vol, mask) in enumerate(zip(volumes, masks)):
            image_stem, mask_stem = f"pair_{i:03d}_image", f"pair_{i:03d}_mask"
            payload_volumes[image_stem] = vol
            payload_volumes[mask_stem] = mask
            pairs.append({"image": image_stem, "mask": mask_stem})
        payload = {"kind": "fit", "training_pairs": pairs}
        if model_dir is not None:
            model_dir = Path(model_dir)
            model_dir.mkdir(parents=True, exist_ok=True)
            payload["model"] = str(model_dir)
        with self._lock:
            response, request_dir = self._run(payload, payload_volumes)
            ref = response.get("model")
            if not isinstance(ref, str) or not ref:
                raise BackendError(f"fit response misses the model path (in {request_dir})")
            self.model_ref_ = ref
            self._cleanup(request_dir)
        if model_dir is not None:
            (model_dir / MODEL_MARKER).write_text(
                json.dumps(
                    {"kind": "external-segmenter", "model_ref": self.model_ref_},
                    sort_keys=True,
                    separators=(",", ":"),
                )
                + "\n"
            )
        return self

    def predict_proba(self, volume: VoxelVolume) -> ProbVolume:
        check_fitted(self, ("model_ref_",))
        payload = {"kind": "predict", "frames": "frames", "model": self.model_ref_}
        with self._lock:
            response, request_dir = self._run(payload, {"frames": volume})
            stem = self._response_stem(response, "probs", request_dir)
            try:
                probs = load_volume(stem, kind="prob")
            except PipelineError as e:
                raise BackendError(f"bad probability volume from backend: {e}") from e
            if probs.shape != volume.shape:
                raise BackendError(
                    f"probs shape {probs.shape} does not match input {volume.shape}"
                )
            self._cleanup(request_dir)
            return probs

    def load(self, model_dir) -> "ExternalSegmenter":
        """Restore the model handle persisted by a ``fit(..., model_dir=...)``."""
        path = Path(model_dir) / MODEL_MARKER
        if not path.is_file():
            raise BackendError(f"no model marker at {path}")
        try:
            marker = json.loads(path.read_text())
            if marker["kind"] != "external-segmenter":
                raise BackendError(f"{path} holds a {marker['kind']!r} model")
            ref = marker["model_ref"]
        except (KeyError, TypeError, json.JSONDecodeError) as e:
            raise BackendError(f"malformed model marker {path}: {e}") from e
        if not isinstance(ref, str) or not ref:
            raise BackendError(f"malformed model marker {path}: empty model_ref")
        self.model_ref_ = ref
        return self
