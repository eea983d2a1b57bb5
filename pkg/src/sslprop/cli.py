"""Command-line entry point wiring the pipeline stages together.

Commands: ``gen-synthetic``, ``init-pseudo``, ``refine``, ``infer``,
``eval``.  Standard out carries exactly one line per run — the path of
that command's machine-readable summary JSON — while progress and
diagnostics go to standard error.

Exit codes are stable:

====  =======================================================
0     success
2     invalid synthetic spec, run config, or usage
3     pseudo-label initialization failed
4     refinement failed (including a store without iteration 0)
5     evaluation failed (missing pairs, undefined distances)
6     inference failed (missing or unloadable fold models)
====  =======================================================

Worker count precedence: ``--workers`` flag, then ``SSLPROP_WORKERS``
env var, then the config's ``workers`` field, then 1.  Re-running a
command with identical inputs rewrites identical bytes: ``init-pseudo``
rebuilds the store from scratch and ``refine`` discards snapshots past
iteration 0 before refining again.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from pathlib import Path

from sklearn.base import clone

from .bootstrap import pseudo_label_dataset
from .config import load_run_config
from .errors import BadConfigError, BadSpecError, MissingFileError, PipelineError, StoreError
from .manifest import parse_manifest
from .metrics import aggregate_report, dice, hausdorff
from .refinement import infer, run_refinement
from .store import PseudoLabelStore
from .synthetic import SynthSpec, generate
from .volumes import BinaryMask, load_volume, save_volume, volume_stem

_FAILURE_CODES = {
    "gen-synthetic": 2,
    "init-pseudo": 3,
    "refine": 4,
    "eval": 5,
    "infer": 6,
}


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _write_summary(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    print(str(path))
    return path


def _resolve_workers(flag, config_value: int) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("SSLPROP_WORKERS")
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise BadConfigError(f"SSLPROP_WORKERS must be an integer, got {env!r}")
        if value < 1:
            raise BadConfigError(f"SSLPROP_WORKERS must be >= 1, got {value}")
        return value
    return config_value


# Commands -------------------------------------------------------------------

def _cmd_gen_synthetic(args) -> int:
    spec_path = Path(args.spec)
    if not spec_path.is_file():
        raise BadSpecError(f"spec file not found: {spec_path}")
    try:
        doc = json.loads(spec_path.read_text())
    except json.JSONDecodeError as exc:
        raise BadSpecError(f"{spec_path}: not valid JSON: {exc}") from exc
    spec = SynthSpec.from_json_dict(doc)
    out = Path(args.out)
    manifest = generate(spec, out)
    _log(
        f"generated {spec.labelled} labelled / {spec.unlabelled} unlabelled / "
        f"{spec.test} test cases under {out}"
    )
    _write_summary(
        out / "summary.json",
        {
            "manifest": manifest.path.name,  # relative: summary sits next to it
            "labelled": spec.labelled,
            "unlabelled": spec.unlabelled,
            "test": spec.test,
            "seed": spec.seed,
        },
    )
    return 0


def _cmd_init_pseudo(args) -> int:
    cfg = load_run_config(args.config)
    workers = _resolve_workers(args.workers, cfg.workers)
    manifest = parse_manifest(cfg.manifest)
    backend = cfg.make_bootstrap_backend()
    if cfg.store_root.exists():
        shutil.rmtree(cfg.store_root)  # restart the pipeline from nothing
    store = pseudo_label_dataset(
        manifest, backend, cfg.bootstrap, cfg.store_root, workers=workers
    )
    counts = {}
    for cid in store.case_ids(0):
        counts[cid] = int(store.load_mask(0, cid).foreground_count())
        _log(f"{cid}: {counts[cid]} foreground voxels")
    _log(f"iteration 0 published for {len(counts)} cases (workers: {workers})")
    # summaries must stay byte-identical across worker counts and run roots,
    # so: no workers field, store path relative to the output root
    _write_summary(
        cfg.output_root / "init_summary.json",
        {
            "store": "store",
            "iteration": 0,
            "foreground_voxels": counts,
        },
    )
    return 0


def _cmd_refine(args) -> int:
    cfg = load_run_config(args.config)
    manifest = parse_manifest(cfg.manifest)
    store = PseudoLabelStore(cfg.store_root)
    if store.latest_iteration() is None:
        raise StoreError(
            f"{cfg.store_root}: no iteration 0 — run 'sslprop init-pseudo' first"
        )
    store.drop_after(0)  # idempotent re-runs rebuild every refinement round
    backend = cfg.make_refine_backend()
    trace = run_refinement(manifest, store, backend, cfg.refinement)
    for record in trace.records:
        _log(
            f"iteration {record.iteration}: mean Dice vs previous "
            f"{record.mean_inter_dice:.4f}"
        )
    _log(f"stopped: {trace.stop_reason}")
    payload = trace.to_json_dict()
    payload["store"] = "store"  # relative to the output root, for portable reports
    _write_summary(cfg.output_root / "trace.json", payload)
    return 0


def _cmd_infer(args) -> int:
    cfg = load_run_config(args.config)
    models_root = Path(args.models)
    k = cfg.refinement.folds
    fold_dirs = [models_root / f"fold_{j}" for j in range(k)]
    missing = [str(d) for d in fold_dirs if not d.is_dir()]
    if missing:
        raise MissingFileError(
            f"expected {k} fold models under {models_root}, missing: {missing}"
        )
    base = cfg.make_refine_backend()
    models = [clone(base).load(d) for d in fold_dirs]

    out = Path(args.out)
    written = {}
    for raw in args.inputs:
        stem = volume_stem(Path(raw))
        if stem.name in written:
            raise PipelineError(f"duplicate input volume name: {stem.name}")
        volume = load_volume(stem)
        mask = infer(models, volume, cfg.refinement.threshold)
        save_volume(mask, out / stem.name)
        written[stem.name] = stem.name  # stems relative to the summary's directory
        _log(f"{stem.name}: {int(mask.foreground_count())} foreground voxels")
    _write_summary(
        out / "summary.json",
        {
            "threshold": cfg.refinement.threshold,
            "masks": written,
        },
    )
    return 0


def _load_tags(path) -> dict[str, tuple[str, ...]]:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"tags file not found: {p}")
    doc = json.loads(p.read_text())
    tags = {}
    for cid, value in doc.items():
        tags[cid] = (value,) if isinstance(value, str) else tuple(value)
    return tags


def _load_mask_dir(root: Path, role: str) -> dict[str, BinaryMask]:
    if not root.is_dir():
        raise MissingFileError(f"{role} directory not found: {root}")
    masks = {}
    for header in sorted(root.glob("*.json")):
        # a volume is a header/blob pair; skip stray JSON such as summaries
        if not header.with_suffix(".raw").is_file():
            continue
        volume = load_volume(header.with_suffix(""), kind="mask")
        masks[header.stem] = volume
    if not masks:
        raise MissingFileError(f"{role} directory holds no volumes: {root}")
    return masks


def _cmd_eval(args) -> int:
    predictions = _load_mask_dir(Path(args.pred), "predictions")
    truths = _load_mask_dir(Path(args.truth), "truth")
    missing_pred = sorted(set(truths) - set(predictions))
    missing_truth = sorted(set(predictions) - set(truths))
    if missing_pred or missing_truth:
        raise MissingFileError(
            f"case sets differ: missing predictions {missing_pred}, "
            f"missing truths {missing_truth}"
        )
    tags = _load_tags(args.tags)

    rows = []
    for cid in sorted(truths):
        rows.append(
            (
                cid,
                tags.get(cid, ()),
                dice(predictions[cid], truths[cid]),
                hausdorff(predictions[cid], truths[cid]),
            )
        )
    report = aggregate_report(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = report.to_text_table()
    (out / "report.txt").write_text(table + "\n")
    _log(table)
    _write_summary(out / "report.json", report.to_json_dict())
    return 0


# Wiring ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sslprop",
        description="Semi-supervised volumetric segmentation pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic dataset")
    p.add_argument("spec", help="spec JSON file")
    p.add_argument("out", help="output dataset directory")

    p = sub.add_parser("init-pseudo", help="bootstrap pseudo labels (iteration 0)")
    p.add_argument("config", help="run config JSON file")
    p.add_argument("--workers", type=int, help="case-level parallelism")

    p = sub.add_parser("refine", help="iteratively refine pseudo labels")
    p.add_argument("config", help="run config JSON file")

    p = sub.add_parser("infer", help="segment volumes with a fold-model ensemble")
    p.add_argument("config", help="run config JSON file")
    p.add_argument("--models", required=True, help="models/iter_<i> directory")
    p.add_argument("--out", required=True, help="output mask directory")
    p.add_argument("inputs", nargs="+", help="input volume stems")

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True, help="predicted mask directory")
    p.add_argument("--truth", required=True, help="ground-truth mask directory")
    p.add_argument("--tags", help="optional JSON file of per-case group tags")
    p.add_argument("--out", required=True, help="report output directory")

    return parser


_HANDLERS = {
    "gen-synthetic": _cmd_gen_synthetic,
    "init-pseudo": _cmd_init_pseudo,
    "refine": _cmd_refine,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (BadSpecError, BadConfigError) as exc:
        _log(f"error: {exc}")
        return 2
    except PipelineError as exc:
        _log(f"error: {exc}")
        return _FAILURE_CODES[args.command]


def entrypoint() -> None:
    """Console-script shim: translate main()'s return into an exit status."""
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
