"""Semi-supervised volumetric segmentation pipeline.

Bootstrap pseudo labels for unlabelled volumes by splicing the few
labelled volumes into them and propagating their masks with a frozen
promptable segmenter, then iteratively refine those labels by k-fold
cross-validated self-training.  Everything is bitwise deterministic for
a given seed, at any worker count.
"""

from .backends import (
    ExternalSegmenter,
    HistogramClassifier,
    NearestPromptPropagator,
    PropagationRequest,
    request_from_sequence,
)
from .bootstrap import BootstrapConfig, pseudo_label_dataset, pseudo_label_volume
from .composition import ComposedSequence, compose_insert, extract_unlabelled, sample_insertion_plan
from .config import RunConfig, load_run_config, make_backend
from .errors import PipelineError
from .manifest import DatasetManifest, FoldAssignment, parse_manifest, split_folds
from .metrics import aggregate_report, dice, hausdorff
from .refinement import RefinementConfig, RefinementTrace, infer, refine_iteration, run_refinement
from .store import PseudoLabelStore, models_dir
from .synthetic import SynthSpec, generate, load_truth
from .volumes import BinaryMask, ProbVolume, VoxelVolume, load_volume, save_volume

__all__ = [
    "BinaryMask",
    "BootstrapConfig",
    "ComposedSequence",
    "DatasetManifest",
    "ExternalSegmenter",
    "FoldAssignment",
    "HistogramClassifier",
    "NearestPromptPropagator",
    "PipelineError",
    "ProbVolume",
    "PropagationRequest",
    "PseudoLabelStore",
    "RefinementConfig",
    "RefinementTrace",
    "RunConfig",
    "SynthSpec",
    "VoxelVolume",
    "aggregate_report",
    "compose_insert",
    "dice",
    "extract_unlabelled",
    "generate",
    "hausdorff",
    "infer",
    "load_run_config",
    "load_truth",
    "load_volume",
    "make_backend",
    "models_dir",
    "parse_manifest",
    "pseudo_label_dataset",
    "pseudo_label_volume",
    "refine_iteration",
    "request_from_sequence",
    "run_refinement",
    "sample_insertion_plan",
    "save_volume",
    "split_folds",
]

__version__ = "0.1.0"
