import pytest

from helpers import make_mask, make_volume, write_manifest


@pytest.fixture
def tiny_dataset(tmp_path):
    """Two labelled and three unlabelled constant volumes with simple masks."""
    labelled = [
        ("lab_a", make_volume((2, 4, 4), 1.0), make_mask((2, 4, 4), fg=[(0, 1, 1)])),
        ("lab_b", make_volume((2, 4, 4), 2.0), make_mask((2, 4, 4), fg=[(1, 2, 2)])),
    ]
    unlabelled = [
        ("unl_a", make_volume((3, 4, 4), 1.5)),
        ("unl_b", make_volume((2, 4, 4), 0.5), "A"),
        ("unl_c", make_volume((4, 4, 4), 2.5), "C"),
    ]
    return write_manifest(tmp_path / "ds", labelled, unlabelled)
