# pylint: disable=redefined-outer-name
import subprocess
import sys

import numpy as np
import pytest

from pts_track import dict_to_dataset, generate_dims_coords, make_attrs
from pts_track._version import __version__


def test_dims_coords():
    shape = 4, 20, 5
    var_name = "x"
    dims, coords = generate_dims_coords(shape, var_name)
    assert dims == ["x_dim_0", "x_dim_1", "x_dim_2"]
    assert len(coords["x_dim_0"]) == 4
    assert len(coords["x_dim_1"]) == 20
    assert len(coords["x_dim_2"]) == 5


def test_dims_coords_extra_dims():
    with pytest.raises(ValueError, match="more dims"):
        generate_dims_coords((4, 20), "x", dims=["frame", "xy", "corner"])


def test_dims_coords_known_labels():
    dims, coords = generate_dims_coords((7, 4, 2), "box", dims=["frame", "corner", "xy"])
    assert dims == ["frame", "corner", "xy"]
    np.testing.assert_array_equal(coords["frame"], np.arange(7))
    np.testing.assert_array_equal(coords["corner"], [0, 1, 2, 3])
    np.testing.assert_array_equal(coords["xy"], ["x", "y"])


def test_dims_coords_known_label_wrong_length():
    _, coords = generate_dims_coords((3,), "center", dims=["xy"])
    np.testing.assert_array_equal(coords["xy"], np.arange(3))


def test_dims_coords_given_coords():
    frames = np.array([10, 11, 12])
    dims, coords = generate_dims_coords((3, 2), "center", dims=["frame"], coords={"frame": frames})
    assert dims == ["frame", "center_dim_0"]
    np.testing.assert_array_equal(coords["frame"], frames)


def test_make_attrs():
    attrs = make_attrs()
    assert attrs["creation_library"] == "pts-track"
    assert attrs["creation_library_version"] == __version__
    assert attrs["creation_library_language"] == "Python"
    assert "created_at" in attrs


def test_make_attrs_update():
    attrs = make_attrs({"scenario": "static", "creation_library": "other"})
    assert attrs["scenario"] == "static"
    assert attrs["creation_library"] == "other"


def test_dict_to_dataset():
    rng = np.random.default_rng(3)
    data = {"center": rng.normal(size=(6, 2)), "score": rng.random(6)}
    dataset = dict_to_dataset(
        data,
        dims={"center": ["frame", "xy"], "score": ["frame"]},
        coords={"frame": np.arange(6) + 4},
        attrs={"failure_count": 2},
    )
    assert set(dataset.data_vars) == {"center", "score"}
    assert dataset["center"].dims == ("frame", "xy")
    assert list(dataset["frame"].values) == [4, 5, 6, 7, 8, 9]
    assert dataset.attrs["failure_count"] == 2
    assert dataset.attrs["creation_library"] == "pts-track"
    np.testing.assert_array_equal(dataset["center"].sel(xy="y").values, data["center"][:, 1])


def test_import_emits_no_warnings():
    code = "import pts_track, pts_track.matcher, pts_track.region, pts_track.synth"
    result = subprocess.run(
        [sys.executable, "-W", "error", "-c", code], capture_output=True, text=True, check=False
    )
    assert result.returncode == 0, result.stderr
