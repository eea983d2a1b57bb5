import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sslprop.backends import (
    HistogramClassifier,
    NearestPromptPropagator,
    PropagationRequest,
)
from sslprop.errors import (
    DegenerateTrainingSetError,
    InvariantViolationError,
    MissingFileError,
    ShapeMismatchError,
    UntrainedModelError,
)
from sslprop.volumes import BinaryMask, ProbVolume, VoxelVolume

EPS = 1e-4


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def frames_of(num, hw=(2, 2), fill=0.0):
    return VoxelVolume(np.full((num,) + hw, fill, dtype=np.float32))


def request_with_prompt(num_frames, prompt_frames, prompt_mask_frames, hw=(2, 2)):
    masks = BinaryMask(np.stack([np.full(hw, m, np.uint8) for m in prompt_mask_frames]))
    return PropagationRequest(
        frames=frames_of(num_frames, hw), prompt_frames=tuple(prompt_frames), prompt_masks=masks
    )


class TestPropagationRequest:
    def test_rejects_empty_prompts(self):
        with pytest.raises(InvariantViolationError):
            PropagationRequest(
                frames=frames_of(2),
                prompt_frames=(),
                prompt_masks=BinaryMask(np.zeros((0, 2, 2), np.uint8)),
            )

    def test_rejects_out_of_range_prompt(self):
        with pytest.raises(InvariantViolationError):
            request_with_prompt(3, [3], [1])

    def test_rejects_mask_count_mismatch(self):
        with pytest.raises(InvariantViolationError):
            request_with_prompt(3, [0, 1], [1])

    def test_rejects_duplicate_prompts(self):
        with pytest.raises(InvariantViolationError):
            request_with_prompt(3, [1, 1], [1, 1])

    def test_rejects_inplane_mismatch(self):
        masks = BinaryMask(np.zeros((1, 3, 3), np.uint8))
        with pytest.raises(InvariantViolationError):
            PropagationRequest(frames=frames_of(2), prompt_frames=(0,), prompt_masks=masks)


class TestNearestPromptPropagator:
    def test_zero_distance_recovers_prompt_mask(self):
        mask = np.array([[1, 0], [0, 1]], np.uint8)
        req = PropagationRequest(
            frames=frames_of(1),
            prompt_frames=(0,),
            prompt_masks=BinaryMask(mask[None]),
        )
        logits = NearestPromptPropagator().propagate(req)
        expected = EPS + (1 - 2 * EPS) * mask.astype(np.float64)
        np.testing.assert_allclose(sigmoid(logits[0]), expected, rtol=1e-6)

    def test_decay_over_three_frames(self):
        # prompt at frame 2, query frame 5: three steps of decay 0.9
        req = request_with_prompt(6, [2], [1])
        logits = NearestPromptPropagator(decay=0.9).propagate(req)
        expected = EPS + (1 - 2 * EPS) * 0.9**3
        np.testing.assert_allclose(sigmoid(logits[5]), expected, rtol=1e-6)

    def test_background_voxels_pin_to_eps(self):
        mask = np.array([[1, 0], [0, 0]], np.uint8)
        req = PropagationRequest(
            frames=frames_of(4),
            prompt_frames=(0,),
            prompt_masks=BinaryMask(mask[None]),
        )
        probs = sigmoid(NearestPromptPropagator().propagate(req))
        np.testing.assert_allclose(probs[3, 1, 1], EPS, rtol=1e-6)

    def test_equidistant_prompts_use_lower_frame(self):
        # frame 3 sits between prompts 1 (all fg) and 5 (all bg)
        req = request_with_prompt(7, [1, 5], [1, 0])
        probs = sigmoid(NearestPromptPropagator(decay=0.9).propagate(req))
        expected = EPS + (1 - 2 * EPS) * 0.9**2
        np.testing.assert_allclose(probs[3], expected, rtol=1e-6)

    def test_prompt_order_does_not_matter(self):
        a = request_with_prompt(7, [1, 5], [1, 0])
        b = PropagationRequest(
            frames=frames_of(7),
            prompt_frames=(5, 1),
            prompt_masks=BinaryMask(
                np.stack([np.zeros((2, 2), np.uint8), np.ones((2, 2), np.uint8)])
            ),
        )
        backend = NearestPromptPropagator()
        assert backend.propagate(a).tobytes() == backend.propagate(b).tobytes()

    def test_probability_strictly_decays_with_distance(self):
        req = request_with_prompt(8, [0], [1])
        probs = sigmoid(NearestPromptPropagator(decay=0.9).propagate(req))[:, 0, 0]
        assert np.all(np.diff(probs) < 0)

    def test_logits_finite_f32_and_shaped(self):
        req = request_with_prompt(5, [2], [1], hw=(3, 4))
        logits = NearestPromptPropagator().propagate(req)
        assert logits.dtype == np.float32
        assert logits.shape == (5, 3, 4)
        assert np.all(np.isfinite(logits))

    def test_zero_eps_hits_the_clamp(self):
        mask = np.array([[1, 0]], np.uint8)
        req = PropagationRequest(
            frames=frames_of(1, hw=(1, 2)),
            prompt_frames=(0,),
            prompt_masks=BinaryMask(mask[None]),
        )
        logits = NearestPromptPropagator(eps=0.0).propagate(req)
        assert logits[0, 0, 0] == 10.0
        assert logits[0, 0, 1] == -10.0

    def test_params_round_trip(self):
        backend = NearestPromptPropagator(decay=0.8, eps=1e-3)
        params = backend.get_params()
        assert params["decay"] == 0.8 and params["eps"] == 1e-3
        assert clone(backend).get_params() == params


def two_bin_training_pair():
    """Eight voxels in two separable intensity bins.

    bin 0 (intensity 0.0): 3 background, 1 foreground.
    bin 1 (intensity 1.0): 1 background, 3 foreground.
    """
    intensity = np.array([0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0], np.float32)
    labels = np.array([0, 0, 0, 1, 0, 1, 1, 1], np.uint8)
    return (
        VoxelVolume(intensity.reshape(2, 2, 2)),
        BinaryMask(labels.reshape(2, 2, 2)),
    )


class TestHistogramClassifier:
    def test_laplace_smoothed_counts_by_hand(self):
        vol, mask = two_bin_training_pair()
        model = HistogramClassifier(bins=2).fit([vol], [mask])
        probs = model.predict_proba(vol).data
        np.testing.assert_allclose(probs[vol.data == 0.0], 2.0 / 6.0, rtol=1e-6)
        np.testing.assert_allclose(probs[vol.data == 1.0], 4.0 / 6.0, rtol=1e-6)

    def test_constant_volume_gives_constant_probs(self):
        vol, mask = two_bin_training_pair()
        model = HistogramClassifier(bins=2).fit([vol], [mask])
        out = model.predict_proba(VoxelVolume(np.full((3, 2, 2), 1.0, np.float32)))
        assert isinstance(out, ProbVolume)
        assert len(np.unique(out.data)) == 1

    def test_out_of_range_intensity_clamps_to_boundary_bin(self):
        vol, mask = two_bin_training_pair()
        model = HistogramClassifier(bins=2).fit([vol], [mask])
        below = model.predict_proba(VoxelVolume(np.full((1, 1, 1), -5.0, np.float32)))
        above = model.predict_proba(VoxelVolume(np.full((1, 1, 1), 7.0, np.float32)))
        np.testing.assert_allclose(below.data, 2.0 / 6.0, rtol=1e-6)
        np.testing.assert_allclose(above.data, 4.0 / 6.0, rtol=1e-6)

    def test_constant_training_intensity_collapses_to_one_bin(self):
        vol = VoxelVolume(np.full((2, 2, 2), 3.5, np.float32))
        mask = BinaryMask(np.array([1, 0, 0, 0, 0, 0, 0, 0], np.uint8).reshape(2, 2, 2))
        model = HistogramClassifier(bins=8).fit([vol], [mask])
        out = model.predict_proba(vol)
        np.testing.assert_allclose(out.data, 2.0 / 10.0, rtol=1e-6)

    def test_all_background_training_set_is_degenerate(self):
        vol = VoxelVolume(np.random.default_rng(0).random((3, 4, 4), dtype=np.float32))
        mask = BinaryMask(np.zeros((3, 4, 4), np.uint8))
        with pytest.raises(DegenerateTrainingSetError):
            HistogramClassifier().fit([vol, vol], [mask, mask])

    def test_separable_classes_reproduce_training_mask(self):
        rng = np.random.default_rng(17)
        low = rng.uniform(0.0, 0.4, size=500)
        high = rng.uniform(0.6, 1.0, size=500)
        intensity = np.concatenate([low, high]).astype(np.float32).reshape(10, 10, 10)
        vol = VoxelVolume(intensity)
        mask = BinaryMask((intensity > 0.5).astype(np.uint8))
        model = HistogramClassifier(bins=64).fit([vol], [mask])
        predicted = (model.predict_proba(vol).data >= 0.5).astype(np.uint8)
        assert np.array_equal(predicted, mask.data)

    def test_invariant_under_affine_intensity_relabeling(self):
        rng = np.random.default_rng(5)
        intensity = rng.random((4, 5, 5), dtype=np.float32)
        mask = BinaryMask((intensity > 0.5).astype(np.uint8))
        shifted = VoxelVolume(2.0 * intensity + 5.0)
        a = HistogramClassifier().fit([VoxelVolume(intensity)], [mask])
        b = HistogramClassifier().fit([shifted], [mask])
        out_a = a.predict_proba(VoxelVolume(intensity)).data
        out_b = b.predict_proba(shifted).data
        assert np.array_equal(out_a, out_b)

    def test_fit_predict_bitwise_deterministic(self):
        rng = np.random.default_rng(11)
        vols = [VoxelVolume(rng.random((3, 4, 4), dtype=np.float32)) for _ in range(3)]
        masks = [BinaryMask((v.data > 0.5).astype(np.uint8)) for v in vols]
        runs = [
            HistogramClassifier().fit(vols, masks).predict_proba(vols[0]).data.tobytes()
            for _ in range(2)
        ]
        assert runs[0] == runs[1]

    def test_probs_stay_inside_eps_band(self):
        vol, mask = two_bin_training_pair()
        model = HistogramClassifier(bins=2, eps=0.05).fit([vol], [mask])
        out = model.predict_proba(VoxelVolume(np.linspace(0, 1, 8, dtype=np.float32).reshape(2, 2, 2)))
        assert float(out.data.min()) >= 0.05
        assert float(out.data.max()) <= 0.95

    def test_save_and_load_round_trip(self, tmp_path):
        vol, mask = two_bin_training_pair()
        model = HistogramClassifier(bins=2).fit([vol], [mask], model_dir=tmp_path / "m")
        restored = HistogramClassifier(bins=2).load(tmp_path / "m")
        probe = VoxelVolume(np.linspace(-1, 2, 27, dtype=np.float32).reshape(3, 3, 3))
        assert (
            model.predict_proba(probe).data.tobytes()
            == restored.predict_proba(probe).data.tobytes()
        )

    def test_load_missing_model_dir(self, tmp_path):
        with pytest.raises(MissingFileError):
            HistogramClassifier().load(tmp_path / "nowhere")

    def test_untrained_predict_raises(self):
        model = HistogramClassifier()
        with pytest.raises(UntrainedModelError):
            model.predict_proba(VoxelVolume(np.zeros((1, 2, 2), np.float32)))
        with pytest.raises(NotFittedError):
            model.predict_proba(VoxelVolume(np.zeros((1, 2, 2), np.float32)))

    def test_clone_drops_fitted_state(self):
        vol, mask = two_bin_training_pair()
        model = HistogramClassifier(bins=2).fit([vol], [mask])
        fresh = clone(model)
        assert fresh.get_params() == model.get_params()
        with pytest.raises(UntrainedModelError):
            fresh.predict_proba(vol)

    def test_empty_training_set_rejected(self):
        with pytest.raises(InvariantViolationError):
            HistogramClassifier().fit([], [])

    def test_shape_mismatched_pair_rejected(self):
        vol = VoxelVolume(np.zeros((2, 2, 2), np.float32))
        mask = BinaryMask(np.ones((1, 2, 2), np.uint8))
        with pytest.raises(ShapeMismatchError):
            HistogramClassifier().fit([vol], [mask])
