import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sslprop.errors import (
    BadFoldCountError,
    DuplicateCaseIdError,
    MalformedManifestError,
    MissingReferencedFileError,
    ShapeMismatchError,
)
from sslprop.manifest import parse_manifest, split_case_ids, split_folds

from helpers import make_mask, make_volume, write_manifest

MASK = (1 << 64) - 1


def oracle_split(case_ids, k, seed):
    """Independent re-statement of the full split procedure."""

    def stream(s, n):
        out, state = [], s & MASK
        for _ in range(n):
            state = (state + 0x9E3779B97F4A7C15) & MASK
            z = state
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
            out.append(z ^ (z >> 31))
        return out

    ordered = sorted(case_ids)
    draws = iter(stream(seed, len(ordered) - 1))
    for i in range(len(ordered) - 1, 0, -1):
        j = (next(draws) * (i + 1)) >> 64
        ordered[i], ordered[j] = ordered[j], ordered[i]
    return {cid: pos % k for pos, cid in enumerate(ordered)}


class TestParseManifest:
    def test_counts_from_large_manifest(self, tmp_path):
        labelled = [
            (f"lab_{i:02d}", make_volume((2, 3, 3)), make_mask((2, 3, 3))) for i in range(10)
        ]
        unlabelled = [(f"unl_{i:03d}", make_volume((2, 3, 3)), "A") for i in range(120)]
        m = parse_manifest(write_manifest(tmp_path / "ds", labelled, unlabelled))
        assert m.num_labelled == 10
        assert m.num_unlabelled == 120
        assert set(m.vendors()[c] for c in m.unlabelled_ids()) == {"A"}

    def test_zero_labelled_rejected(self, tmp_path):
        path = write_manifest(tmp_path / "ds", [], [("u0", make_volume())])
        with pytest.raises(MalformedManifestError):
            parse_manifest(path)

    def test_zero_unlabelled_rejected(self, tmp_path):
        path = write_manifest(tmp_path / "ds", [("l0", make_volume(), make_mask())], [])
        with pytest.raises(MalformedManifestError):
            parse_manifest(path)

    def test_duplicate_id_across_subsets(self, tmp_path):
        path = write_manifest(
            tmp_path / "ds",
            [("case", make_volume(), make_mask())],
            [("case", make_volume())],
        )
        with pytest.raises(DuplicateCaseIdError):
            parse_manifest(path)

    def test_missing_referenced_file(self, tmp_path):
        path = write_manifest(
            tmp_path / "ds", [("l0", make_volume(), make_mask())], [("u0", make_volume())]
        )
        (tmp_path / "ds" / "volumes" / "u0.raw").unlink()
        with pytest.raises(MissingReferencedFileError):
            parse_manifest(path)

    def test_mask_shape_mismatch(self, tmp_path):
        path = write_manifest(
            tmp_path / "ds",
            [("l0", make_volume((2, 4, 4)), make_mask((2, 4, 5)))],
            [("u0", make_volume())],
        )
        with pytest.raises(ShapeMismatchError):
            parse_manifest(path)

    def test_not_json(self, tmp_path):
        bad = tmp_path / "m.json"
        bad.write_text("not json")
        with pytest.raises(MalformedManifestError):
            parse_manifest(bad)

    def test_vendor_tags_carried(self, tiny_dataset):
        m = parse_manifest(tiny_dataset)
        vendors = m.vendors()
        assert vendors["unl_b"] == "A"
        assert vendors["unl_c"] == "C"
        assert vendors["unl_a"] is None


class TestSplitFolds:
    def test_n_equals_k_is_one_per_fold(self):
        fa = split_case_ids([f"c{i}" for i in range(5)], 5, 0)
        assert sorted(fa.fold_sizes()) == [1, 1, 1, 1, 1]

    def test_seven_cases_five_folds_sizes(self):
        fa = split_case_ids([f"c{i}" for i in range(7)], 5, 12345)
        assert sorted(fa.fold_sizes()) == [1, 1, 1, 2, 2]

    def test_matches_independent_oracle(self):
        ids = [f"c{i}" for i in range(1, 11)]
        fa = split_case_ids(ids, 5, 42)
        assert fa.assignment == oracle_split(ids, 5, 42)

    def test_bad_fold_count(self):
        with pytest.raises(BadFoldCountError):
            split_case_ids(["a", "b"], 1, 0)

    def test_split_folds_uses_unlabelled_ids(self, tiny_dataset):
        m = parse_manifest(tiny_dataset)
        fa = split_folds(m, 3, 7)
        assert set(fa.assignment) == set(m.unlabelled_ids())

    def test_input_order_irrelevant(self):
        ids = [f"case_{i}" for i in range(9)]
        a = split_case_ids(ids, 4, 99)
        b = split_case_ids(list(reversed(ids)), 4, 99)
        assert a == b

    @given(
        st.sets(st.text(st.characters(min_codepoint=97, max_codepoint=122), min_size=1, max_size=6), min_size=1, max_size=30),
        st.integers(2, 7),
        st.integers(0, MASK),
    )
    @settings(max_examples=60, deadline=None)
    def test_partition_and_balance(self, ids, k, seed):
        fa = split_case_ids(ids, k, seed)
        assert set(fa.assignment) == set(ids)
        sizes = fa.fold_sizes()
        assert sum(sizes) == len(ids)
        assert max(sizes) - min(sizes) <= 1
        if len(ids) >= k:
            assert min(sizes) >= 1
        assert split_case_ids(ids, k, seed) == fa
