"""Run configuration: one JSON file wiring a whole pipeline run.

Shape (only ``manifest``, ``output_root`` and ``seed`` are required)::

    {
      "manifest": "data/manifest.json",
      "output_root": "runs/demo",
      "seed": 7,
      "workers": 1,
      "bootstrap": {
        "backend": {"kind": "reference-propagation"},
        "insertions": 4, "threshold": 0.5, "work_size": [256, 256]
      },
      "refine": {
        "backend": {"kind": "reference-histogram"},
        "folds": 5, "max_iterations": 3, "early_stop_dice": 0.995,
        "threshold": 0.5, "resplit_per_iteration": false
      }
    }

Backend specs take ``kind`` plus that backend's constructor knobs:
``reference-propagation`` (decay, eps, clamp), ``reference-histogram``
(bins, eps) and ``external`` (command, timeout, workdir).  Relative paths
are resolved against the config file's directory.  ``early_stop_dice``
of ``null`` disables convergence detection; ``work_size`` of ``null``
keeps native resolution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .backends import ExternalSegmenter, HistogramClassifier, NearestPromptPropagator
from .bootstrap import BootstrapConfig
from .errors import BadConfigError, PipelineError
from .refinement import RefinementConfig

_BACKEND_KINDS = {
    "reference-propagation": (NearestPromptPropagator, ("decay", "eps", "clamp")),
    "reference-histogram": (HistogramClassifier, ("bins", "eps")),
    "external": (ExternalSegmenter, ("command", "timeout", "workdir", "keep_request_dirs")),
}


def make_backend(spec):
    """Build a segmenter backend from its config dict ({"kind": ..., knobs})."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise BadConfigError(f"backend spec must be an object with a 'kind': {spec!r}")
    kind = spec["kind"]
    if kind not in _BACKEND_KINDS:
        raise BadConfigError(
            f"unknown backend kind {kind!r}, expected one of {sorted(_BACKEND_KINDS)}"
        )
    cls, allowed = _BACKEND_KINDS[kind]
    knobs = {k: v for k, v in spec.items() if k != "kind"}
    unknown = set(knobs) - set(allowed)
    if unknown:
        raise BadConfigError(f"backend {kind!r} got unknown options {sorted(unknown)}")
    if kind == "external" and "command" not in knobs:
        raise BadConfigError("external backend needs a 'command'")
    try:
        return cls(**knobs)
    except (PipelineError, TypeError, ValueError) as exc:
        raise BadConfigError(f"cannot build backend {kind!r}: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    manifest: Path
    output_root: Path
    seed: int
    workers: int
    bootstrap: BootstrapConfig
    bootstrap_backend: dict
    refinement: RefinementConfig
    refine_backend: dict

    @property
    def store_root(self) -> Path:
        return self.output_root / "store"

    def make_bootstrap_backend(self):
        return make_backend(self.bootstrap_backend)

    def make_refine_backend(self):
        return make_backend(self.refine_backend)


def _take(section: dict, allowed, where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise BadConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return {k: v for k, v in section.items() if k != "backend"}


def load_run_config(path) -> RunConfig:
    """Parse and validate a run config file.

    All range errors from the stage configs surface as BadConfigError so
    the CLI can treat every config problem uniformly.
    """
    path = Path(path)
    if not path.is_file():
        raise BadConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise BadConfigError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise BadConfigError(f"{path}: top level must be an object")

    allowed = {"manifest", "output_root", "seed", "workers", "bootstrap", "refine"}
    unknown = set(doc) - allowed
    if unknown:
        raise BadConfigError(f"{path}: unknown keys {sorted(unknown)}")
    for key in ("manifest", "output_root", "seed"):
        if key not in doc:
            raise BadConfigError(f"{path}: missing required key {key!r}")

    base = path.parent

    def resolve(raw) -> Path:
        p = Path(raw)
        return p if p.is_absolute() else base / p

    seed = doc["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise BadConfigError(f"{path}: seed must be an integer")
    workers = doc.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        raise BadConfigError(f"{path}: workers must be a positive integer")

    boot_sec = doc.get("bootstrap", {})
    refine_sec = doc.get("refine", {})
    if not isinstance(boot_sec, dict) or not isinstance(refine_sec, dict):
        raise BadConfigError(f"{path}: 'bootstrap' and 'refine' must be objects")

    boot_kwargs = _take(
        boot_sec, ("backend", "insertions", "threshold", "work_size"), f"{path}: bootstrap"
    )
    if boot_kwargs.get("work_size") is not None:
        boot_kwargs["work_size"] = tuple(boot_kwargs["work_size"])
    refine_kwargs = _take(
        refine_sec,
        ("backend", "folds", "max_iterations", "early_stop_dice", "threshold",
         "resplit_per_iteration"),
        f"{path}: refine",
    )
    try:
        bootstrap = BootstrapConfig(seed=seed, **boot_kwargs)
        refinement = RefinementConfig(seed=seed, **refine_kwargs)
    except (PipelineError, TypeError) as exc:
        raise BadConfigError(f"{path}: {exc}") from exc

    boot_backend = boot_sec.get("backend", {"kind": "reference-propagation"})
    refine_backend = refine_sec.get("backend", {"kind": "reference-histogram"})
    make_backend(boot_backend)  # fail fast on unknown kinds / bad knobs
    make_backend(refine_backend)

    return RunConfig(
        manifest=resolve(doc["manifest"]),
        output_root=resolve(doc["output_root"]),
        seed=seed,
        workers=workers,
        bootstrap=bootstrap,
        bootstrap_backend=boot_backend,
        refinement=refinement,
        refine_backend=refine_backend,
    )
