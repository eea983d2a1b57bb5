"""Built-in deterministic reference backends.

Closed-form stand-ins for the heavyweight segmenters, small enough to
hand-check yet responsive to their inputs, so every pipeline stage can be
exercised and verified without model weights:

* :class:`NearestPromptPropagator` - frozen propagator whose confidence
  decays geometrically with frame distance from the nearest prompt,
* :class:`HistogramClassifier` - trainable intensity-histogram Bayes
  classifier whose quality genuinely depends on its (pseudo) labels.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from ..errors import (
    BackendError,
    DegenerateTrainingSetError,
    MissingFileError,
)
from ..validation import check_fitted, check_training_set
from ..volumes import BinaryMask, ProbVolume, VoxelVolume
from .base import PropagationRequest

MODEL_FILE = "model.json"


class NearestPromptPropagator(BaseEstimator):
    """Propagates each prompt mask outward with geometric confidence decay.

    For a frame at distance ``d`` from its nearest prompt frame (ties go to
    the lower frame index) with mask ``m`` there, the implied probability is

        p = eps + (1 - 2*eps) * decay**d * m

    and the returned logit is ``log(p / (1 - p))`` clamped to ``±clamp``,
    as float32.  Intensities are ignored entirely; the backend is frozen.
    """

    def __init__(self, decay: float = 0.9, eps: float = 1e-4, clamp: float = 10.0):
        self.decay = decay
        self.eps = eps
        self.clamp = clamp

    def propagate(self, request: PropagationRequest) -> np.ndarray:
        order = sorted(range(len(request.prompt_frames)), key=request.prompt_frames.__getitem__)
        prompt_idx = np.array([request.prompt_frames[k] for k in order], dtype=np.int64)
        masks = request.prompt_masks.data[order].astype(np.float64)
        num_frames = request.frames.num_frames
        dist = np.abs(np.arange(num_frames, dtype=np.int64)[:, None] - prompt_idx[None, :])
        # argmin keeps the first hit, which after sorting is the lower frame
        nearest = np.argmin(dist, axis=1)
        d = dist[np.arange(num_frames), nearest]
        weight = np.power(float(self.decay), d.astype(np.float64))
        p = self.eps + (1.0 - 2.0 * self.eps) * weight[:, None, None] * masks[nearest]
        with np.errstate(divide="ignore"):
            logits = np.log(p / (1.0 - p))
        return np.clip(logits, -self.clamp, self.clamp).astype(np.float32)


class HistogramClassifier(BaseEstimator):
    """Equal-width intensity-histogram Bayes classifier.

    ``fit`` pools all training voxels, splits the observed intensity range
    into ``bins`` equal-width bins and estimates p(foreground | bin) with
    Laplace add-one smoothing; ``predict_proba`` looks each voxel's bin up.
    Intensities outside the training range fall into the boundary bins.
    Probabilities are clamped to [eps, 1 - eps].
    """

    def __init__(self, bins: int = 64, eps: float = 1e-4):
        self.bins = bins
        self.eps = eps

    def _bin_index(self, values: np.ndarray, lo: float, hi: float) -> np.ndarray:
        if hi == lo:
            return np.zeros(values.shape, dtype=np.int64)
        scaled = (values.astype(np.float64) - lo) / (hi - lo) * self.bins
        return np.clip(np.floor(scaled).astype(np.int64), 0, self.bins - 1)

    def fit(self, volumes, masks, model_dir=None) -> "HistogramClassifier":
        """Estimate the per-bin foreground probabilities.

        If ``model_dir`` is given the fitted model is also persisted there,
        ready for :meth:`load`.
        """
        volumes, masks = check_training_set(volumes, masks)
        values = np.concatenate([v.data.ravel() for v in volumes])
        labels = np.concatenate([m.data.ravel() for m in masks])
        if not int(np.count_nonzero(labels)):
            raise DegenerateTrainingSetError(
                "training set has no foreground voxels; nothing to estimate"
            )
        lo, hi = float(values.min()), float(values.max())
        idx = self._bin_index(values, lo, hi)
        total = np.bincount(idx, minlength=self.bins).astype(np.float64)
        fg = np.bincount(idx, weights=labels.astype(np.float64), minlength=self.bins)
        p_fg = (fg + 1.0) / (total + 2.0)
        self.lo_, self.hi_ = lo, hi
        self.p_fg_ = np.clip(p_fg, self.eps, 1.0 - self.eps)
        if model_dir is not None:
            self.save(model_dir)
        return self

    def predict_proba(self, volume: VoxelVolume) -> ProbVolume:
        check_fitted(self, ("lo_", "hi_", "p_fg_"))
        idx = self._bin_index(volume.data, self.lo_, self.hi_)
        return ProbVolume(self.p_fg_[idx].astype(np.float32), volume.spacing)

    def predict(self, volume: VoxelVolume, threshold: float = 0.5) -> BinaryMask:
        probs = self.predict_proba(volume)
        return BinaryMask((probs.data >= threshold).astype(np.uint8), volume.spacing)

    def save(self, model_dir) -> Path:
        check_fitted(self, ("lo_", "hi_", "p_fg_"))
        model_dir = Path(model_dir)
        model_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "kind": "histogram-classifier",
            "bins": int(self.bins),
            "eps": float(self.eps),
            "lo": self.lo_,
            "hi": self.hi_,
            "p_fg": self.p_fg_.tolist(),
        }
        path = model_dir / MODEL_FILE
        path.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")
        return path

    def load(self, model_dir) -> "HistogramClassifier":
        """Restore a persisted model, adopting its bin geometry."""
        path = Path(model_dir) / MODEL_FILE
        if not path.is_file():
            raise MissingFileError(f"no model file at {path}")
        try:
            payload = json.loads(path.read_text())
            if payload["kind"] != "histogram-classifier":
                raise BackendError(f"{path} holds a {payload['kind']!r} model")
            self.bins = int(payload["bins"])
            self.eps = float(payload["eps"])
            self.lo_ = float(payload["lo"])
            self.hi_ = float(payload["hi"])
            self.p_fg_ = np.asarray(payload["p_fg"], dtype=np.float64)
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as e:
            raise BackendError(f"malformed model file {path}: {e}") from e
        if self.p_fg_.shape != (self.bins,):
            raise BackendError(
                f"{path}: {self.p_fg_.size} bin probabilities for {self.bins} bins"
            )
        return self
