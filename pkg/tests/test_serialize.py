import numpy as np
import pytest

from ttnsketch.data import DiscreteSamples
from ttnsketch.models import mrf_sample, preset_model, tree_gm_to_ttns
from ttnsketch.serialize import (
    HeaderError,
    ShapeMismatchError,
    VersionError,
    load_samples_binary,
    load_samples_text,
    load_ttns,
    save_samples_binary,
    save_samples_text,
    save_ttns,
)

rng = np.random.default_rng(64)


def sample_fixture():
    return mrf_sample(preset_model("trident10").mrf, 100, seed=0)


def test_text_round_trip(tmp_path):
    s = sample_fixture()
    path = tmp_path / "s.txt"
    save_samples_text(s, path)
    loaded = load_samples_text(path)
    assert np.array_equal(loaded.data, s.data)
    assert np.array_equal(loaded.state_counts, s.state_counts)
    header = path.read_text().splitlines()[0]
    assert header == "ttns-samples v1 d=10 n=2,2,2,2,2,2,2,2,2,2"


def test_text_values_are_one_based(tmp_path):
    s = DiscreteSamples(np.array([[0, 1], [1, 0]]), np.array([2, 2]))
    path = tmp_path / "s.txt"
    save_samples_text(s, path)
    body = path.read_text().splitlines()[1:]
    assert body == ["1 2", "2 1"]


def test_binary_round_trip_bitwise(tmp_path):
    s = sample_fixture()
    path = tmp_path / "s.bin"
    save_samples_binary(s, path)
    loaded = load_samples_binary(path)
    assert np.array_equal(loaded.data, s.data)
    save_samples_binary(loaded, tmp_path / "again.bin")
    assert (tmp_path / "s.bin").read_bytes() == (tmp_path / "again.bin").read_bytes()


def test_malformed_header_rejected(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("not-a-header\n1 2\n")
    with pytest.raises(HeaderError):
        load_samples_text(path)


def test_version_mismatch_rejected(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("ttns-samples v9 d=2 n=2,2\n1 2\n")
    with pytest.raises(VersionError):
        load_samples_text(path)


def test_row_width_mismatch_names_the_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("ttns-samples v1 d=2 n=2,2\n1 2\n1\n")
    with pytest.raises(ShapeMismatchError, match="line 3"):
        load_samples_text(path)


def test_out_of_range_entry_names_the_row(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("ttns-samples v1 d=2 n=2,2\n1 2\n1 3\n")
    with pytest.raises(ShapeMismatchError, match="row 3"):
        load_samples_text(path)


def test_binary_shape_mismatch(tmp_path):
    s = sample_fixture()
    path = tmp_path / "s.bin"
    save_samples_binary(s, path)
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(ShapeMismatchError):
        load_samples_binary(path)


def test_model_round_trip_bitwise(tmp_path):
    preset = preset_model("trident10")
    model = tree_gm_to_ttns(preset.mrf, preset.tree)
    save_ttns(model, tmp_path / "m")
    loaded = load_ttns(tmp_path / "m")
    assert loaded.tree == model.tree
    assert loaded.ranks == model.ranks
    for k in model.tree.nodes:
        assert np.array_equal(loaded.cores[k], model.cores[k])
    save_ttns(loaded, tmp_path / "m2")
    assert (tmp_path / "m.bin").read_bytes() == (tmp_path / "m2.bin").read_bytes()
    assert (tmp_path / "m.json").read_text() == (tmp_path / "m2.json").read_text()


def test_model_blob_length_checked(tmp_path):
    preset = preset_model("trident10")
    model = tree_gm_to_ttns(preset.mrf, preset.tree)
    save_ttns(model, tmp_path / "m")
    blob = (tmp_path / "m.bin").read_bytes()
    (tmp_path / "m.bin").write_bytes(blob + b"\x00" * 8)
    with pytest.raises(ShapeMismatchError):
        load_ttns(tmp_path / "m")
