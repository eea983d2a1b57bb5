"""Segmenter backends: the request/contract types, the built-in reference
backends, and the subprocess client for external segmenters."""

from .base import (
    FrozenSegmenter,
    PropagationRequest,
    TrainableSegmenter,
    request_from_sequence,
)
from .external import ExternalSegmenter
from .reference import HistogramClassifier, NearestPromptPropagator

__all__ = [
    "ExternalSegmenter",
    "FrozenSegmenter",
    "HistogramClassifier",
    "NearestPromptPropagator",
    "PropagationRequest",
    "TrainableSegmenter",
    "request_from_sequence",
]
