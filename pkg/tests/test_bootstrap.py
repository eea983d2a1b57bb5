import numpy as np
import pytest

from sslprop.backends import NearestPromptPropagator, request_from_sequence
from sslprop.bootstrap import BootstrapConfig, pseudo_label_dataset, pseudo_label_volume
from sslprop.composition import compose_insert, sample_insertion_plan
from sslprop.errors import (
    BackendError,
    CaseProcessingError,
    EmptyLabelledSetError,
    InvariantViolationError,
)
from sslprop.manifest import parse_manifest
from sslprop.rng import derive_seed
from sslprop.volumes import BinaryMask, VoxelVolume

from helpers import make_mask, make_volume, write_manifest


class ZeroLogits:
    """Stub backend: completely uninformative output."""

    def propagate(self, request):
        return np.zeros(request.frames.shape, np.float32)


class FailsOnHalfIntensity:
    def propagate(self, request):
        if np.any(request.frames.data == 0.5):
            raise BackendError("synthetic failure")
        return np.zeros(request.frames.shape, np.float32)


def brute_force_pseudo(unlabelled, labelled, backend, cfg):
    """Independent re-statement of the ensemble arithmetic: run every
    (labelled, insertion) pair separately and average in the pinned order."""
    total = np.zeros(unlabelled.shape, np.float32)
    for i, (vol, mask) in enumerate(labelled):
        plan = sample_insertion_plan(
            unlabelled.num_frames, cfg.insertions, derive_seed(cfg.seed, i)
        )
        for loc in plan.locations:
            seq = compose_insert(vol, mask, unlabelled, loc)
            logits = backend.propagate(request_from_sequence(seq))
            probs = 1.0 / (1.0 + np.exp(-logits))
            from sslprop.composition import extract_unlabelled

            total = total + extract_unlabelled(probs, seq)
    return total / (len(labelled) * cfg.insertions)


def random_case(seed, num_frames=5, hw=(4, 4)):
    rng = np.random.default_rng(seed)
    vol = VoxelVolume(rng.random((num_frames,) + hw, dtype=np.float32))
    mask = BinaryMask(rng.integers(0, 2, (num_frames,) + hw, dtype=np.uint8))
    return vol, mask


class TestConfig:
    def test_defaults(self):
        cfg = BootstrapConfig(seed=1)
        assert cfg.insertions == 4
        assert cfg.threshold == 0.5
        assert cfg.work_size is None

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"insertions": 0},
            {"threshold": 0.0},
            {"threshold": 1.0},
            {"work_size": (0, 4)},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(InvariantViolationError):
            BootstrapConfig(seed=1, **kwargs)


class TestPseudoLabelVolume:
    def test_single_run_is_used_verbatim(self):
        unl, _ = random_case(0)
        lab = random_case(1, num_frames=2)
        backend = NearestPromptPropagator()
        cfg = BootstrapConfig(seed=7, insertions=1)
        prob, mask = pseudo_label_volume(unl, [lab], backend, cfg)

        plan = sample_insertion_plan(unl.num_frames, 1, derive_seed(7, 0))
        seq = compose_insert(lab[0], lab[1], unl, plan.locations[0])
        logits = backend.propagate(request_from_sequence(seq))
        from sslprop.composition import extract_unlabelled

        expected = extract_unlabelled(1.0 / (1.0 + np.exp(-logits)), seq)
        assert prob.data.tobytes() == expected.tobytes()
        assert np.array_equal(mask.data, (expected >= 0.5).astype(np.uint8))

    def test_ensemble_matches_brute_force_bitwise(self):
        unl, _ = random_case(2, num_frames=6)
        labelled = [random_case(3, num_frames=2), random_case(4, num_frames=3)]
        backend = NearestPromptPropagator()
        cfg = BootstrapConfig(seed=21, insertions=2)
        prob, mask = pseudo_label_volume(unl, labelled, backend, cfg)
        expected = brute_force_pseudo(unl, labelled, backend, cfg)
        assert prob.data.tobytes() == expected.astype(np.float32).tobytes()
        assert mask.spacing == unl.spacing

    def test_uninformative_backend_hits_threshold_boundary(self):
        unl, _ = random_case(5)
        lab = random_case(6, num_frames=1)
        prob, mask = pseudo_label_volume(
            unl, [lab], ZeroLogits(), BootstrapConfig(seed=0, insertions=3)
        )
        assert np.all(prob.data == 0.5)
        # the >= rule sends the exact boundary to foreground
        assert np.all(mask.data == 1)

    def test_raising_threshold_never_grows_foreground(self):
        unl, _ = random_case(8)
        labelled = [random_case(9, num_frames=2)]
        backend = NearestPromptPropagator()
        masks = []
        for t in (0.3, 0.5, 0.7):
            _, mask = pseudo_label_volume(
                unl, labelled, backend, BootstrapConfig(seed=3, threshold=t, insertions=2)
            )
            masks.append(mask.data.astype(bool))
        assert np.all(masks[1] <= masks[0])
        assert np.all(masks[2] <= masks[1])

    def test_work_size_round_trips_to_native_resolution(self):
        unl = VoxelVolume(np.random.default_rng(1).random((3, 6, 6), dtype=np.float32))
        lab = random_case(2, num_frames=2, hw=(8, 8))
        cfg = BootstrapConfig(seed=5, insertions=2, work_size=(4, 4))
        prob, mask = pseudo_label_volume(unl, [lab], NearestPromptPropagator(), cfg)
        assert prob.shape == (3, 6, 6)
        assert mask.shape == (3, 6, 6)
        assert float(prob.data.min()) >= 0.0 and float(prob.data.max()) <= 1.0

    def test_mismatched_inplane_shapes_are_conditioned_to_the_unlabelled_grid(self):
        unl = VoxelVolume(np.random.default_rng(3).random((3, 4, 4), dtype=np.float32))
        lab = random_case(4, num_frames=2, hw=(6, 6))
        prob, _ = pseudo_label_volume(
            unl, [lab], NearestPromptPropagator(), BootstrapConfig(seed=1, insertions=1)
        )
        assert prob.shape == (3, 4, 4)

    def test_empty_labelled_set_rejected(self):
        unl, _ = random_case(0)
        with pytest.raises(EmptyLabelledSetError):
            pseudo_label_volume(unl, [], ZeroLogits(), BootstrapConfig(seed=0))

    def test_backend_failure_reports_which_run(self):
        unl, _ = random_case(0)
        labelled = [random_case(1, num_frames=2), random_case(2, num_frames=2)]

        class FailsOnSecondLabelled:
            def __init__(self):
                self.calls = 0

            def propagate(self, request):
                self.calls += 1
                if self.calls == 4:
                    raise BackendError("synthetic failure")
                return np.zeros(request.frames.shape, np.float32)

        with pytest.raises(BackendError, match=r"labelled 1.*insertion 1"):
            pseudo_label_volume(
                unl, labelled, FailsOnSecondLabelled(), BootstrapConfig(seed=0, insertions=2)
            )


class TestPseudoLabelDataset:
    def test_covers_every_unlabelled_case(self, tiny_dataset, tmp_path):
        manifest = parse_manifest(tiny_dataset)
        store = pseudo_label_dataset(
            manifest,
            NearestPromptPropagator(),
            BootstrapConfig(seed=11, insertions=2),
            tmp_path / "store",
        )
        assert store.case_ids(0) == ("unl_a", "unl_b", "unl_c")
        for cid in store.case_ids(0):
            assert store.load_prob(0, cid) is not None

    def _run_against(self, root, unlabelled_order, workers=1, seed=13):
        labelled = [
            ("lab_a", make_volume((2, 4, 4), 1.0), make_mask((2, 4, 4), fg=[(0, 1, 1)])),
            ("lab_b", make_volume((2, 4, 4), 2.0), make_mask((2, 4, 4), fg=[(1, 2, 2)])),
        ]
        cases = {
            "unl_a": ("unl_a", make_volume((3, 4, 4), 1.5)),
            "unl_b": ("unl_b", make_volume((2, 4, 4), 0.5), "A"),
            "unl_c": ("unl_c", make_volume((4, 4, 4), 2.5), "C"),
        }
        manifest_path = write_manifest(
            root / "ds", labelled, [cases[c] for c in unlabelled_order]
        )
        store = pseudo_label_dataset(
            parse_manifest(manifest_path),
            NearestPromptPropagator(),
            BootstrapConfig(seed=seed, insertions=2),
            root / "store",
            workers=workers,
        )
        iter_dir = store.root / "iter_0"
        return {
            str(p.relative_to(iter_dir)): p.read_bytes()
            for p in sorted(iter_dir.rglob("*"))
            if p.is_file()
        }

    def test_manifest_order_and_workers_do_not_change_bits(self, tmp_path):
        baseline = self._run_against(tmp_path / "a", ["unl_a", "unl_b", "unl_c"])
        shuffled = self._run_against(tmp_path / "b", ["unl_c", "unl_a", "unl_b"])
        threaded = self._run_against(
            tmp_path / "c", ["unl_a", "unl_b", "unl_c"], workers=3
        )
        assert baseline == shuffled
        assert baseline == threaded

    def test_case_failures_are_collected_and_nothing_published(
        self, tiny_dataset, tmp_path
    ):
        manifest = parse_manifest(tiny_dataset)
        with pytest.raises(CaseProcessingError) as err:
            pseudo_label_dataset(
                manifest,
                FailsOnHalfIntensity(),
                BootstrapConfig(seed=0, insertions=1),
                tmp_path / "store",
            )
        assert set(err.value.failures) == {"unl_b"}
        assert not (tmp_path / "store" / "iter_0").exists()
