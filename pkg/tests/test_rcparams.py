# pylint: disable=redefined-outer-name
import numpy as np
import pytest

from pts_track.geometry import RansacConfig
from pts_track.pipeline import TrackerConfig
from pts_track.rcparams import (
    _make_validate_choice,
    _validate_matcher_key,
    _validate_positive_int,
    _validate_probability,
    _validate_resolution,
    make_iterable_validator,
    rc_context,
    rc_params,
    rcParams,
    read_rcfile,
    resolve_key,
)


@pytest.fixture
def valid_rcfile(tmp_path):
    path = tmp_path / "valid.rcparams"
    path.write_text(
        "# a comment line\n"
        "tracker.n : 20\n"
        "ransac.inlier_threshold: 1.5  # inline comment\n"
        "tracker.n : 25\n"
        "not a key value line\n",
        encoding="utf8",
    )
    return path


@pytest.fixture
def bad_rcfile(tmp_path):
    path = tmp_path / "bad.rcparams"
    path.write_text("tracker.mode : sideways\n", encoding="utf8")
    return path


### Test rcparams classes ###
def test_rc_context_dict():
    rcParams["tracker.mode"] = "pts"
    with rc_context(rc={"tracker.mode": "baseline"}):
        assert rcParams["tracker.mode"] == "baseline"
    assert rcParams["tracker.mode"] == "pts"


def test_rc_context_file(valid_rcfile):
    n_default = rcParams["tracker.n"]
    with rc_context(fname=valid_rcfile):
        assert rcParams["tracker.n"] == 25
        assert rcParams["ransac.inlier_threshold"] == 1.5
    assert rcParams["tracker.n"] == n_default


def test_rc_context_restores_on_error():
    with pytest.raises(RuntimeError):
        with rc_context(rc={"ransac.max_iterations": 7}):
            raise RuntimeError("boom")
    assert rcParams["ransac.max_iterations"] == 500


def test_bad_rc_file(bad_rcfile):
    """Test bad value raises error."""
    with pytest.raises(ValueError, match="Bad val "):
        read_rcfile(bad_rcfile)


def test_warning_rc_file(valid_rcfile, caplog):
    """Test invalid lines and duplicated keys log warnings."""
    read_rcfile(valid_rcfile)
    records = caplog.records
    assert len(records) == 2
    assert all(record.levelname == "WARNING" for record in records)
    assert "Duplicate key" in caplog.text
    assert "Illegal" in caplog.text


def test_rc_params_ignore_files():
    defaults = rc_params(ignore_files=True)
    assert defaults["tracker.n"] == 10
    assert defaults["region.pad_value"] is None
    assert defaults["kalman.measurement_noise"] == (4.0, 4.0)


def test_bad_key():
    """Test the error when using unexistent keys in rcParams is correct."""
    with pytest.raises(KeyError, match="bad_key is not a valid rc"):
        rcParams["bad_key"] = "nothing"


def test_del_key_error():
    """Check that rcParams keys cannot be deleted."""
    with pytest.raises(TypeError, match="keys cannot be deleted"):
        del rcParams["tracker.n"]


def test_clear_error():
    """Check that rcParams cannot be cleared."""
    with pytest.raises(TypeError, match="keys cannot be deleted"):
        rcParams.clear()


def test_pop_error():
    """Check rcParams pop error."""
    with pytest.raises(TypeError, match=r"keys cannot be deleted.*get\(key\)"):
        rcParams.pop("tracker.n")


def test_popitem_error():
    """Check rcParams popitem error."""
    with pytest.raises(TypeError, match=r"keys cannot be deleted.*get\(key\)"):
        rcParams.popitem()


def test_setdefaults_error():
    """Check rcParams setdefault error."""
    with pytest.raises(TypeError, match="Use a ptsrc"):
        rcParams.setdefault("tracker.n", 3)


def test_rcparams_find_all():
    ransac_rcparams = rcParams.find_all("ransac")
    assert len(ransac_rcparams) == 5


def test_rcparams_section():
    section = rcParams.section("matcher")
    assert section == {
        "key": "ncc",
        "pixel_tolerance": 0.15,
        "failure_threshold": 0.25,
        "window_influence": 0.4,
    }


def test_rcparams_repr_str():
    """Check both repr and str print all keys."""
    repr_str = repr(rcParams)
    str_str = str(rcParams)
    assert repr_str.startswith("RcParams")
    for string in (repr_str, str_str):
        assert all(key in string for key in rcParams.keys())


@pytest.mark.parametrize(
    "key, expected",
    [
        ("tracker.n", "tracker.n"),
        ("velocity_threshold", "region.velocity_threshold"),
        ("inlier_threshold", "ransac.inlier_threshold"),
        ("missing", None),
        ("noise", None),
    ],
)
def test_resolve_key(key, expected):
    assert resolve_key(key) == expected


### Test validation functions ###
@pytest.mark.parametrize("param", ["tracker.mode", "tracker.match_pairing"])
def test_choice_bad_values(param):
    """Test error messages are correct for rcParams validated with _make_validate_choice."""
    msg = "{}: bad_value is not one of".format(param.replace(".", r"\."))
    with pytest.raises(ValueError, match=msg):
        rcParams[param] = "bad_value"


@pytest.mark.parametrize("allow_none", (True, False))
@pytest.mark.parametrize("typeof", (str, int))
@pytest.mark.parametrize("args", [("not one", 10), (False, None), (False, 4)])
def test_make_validate_choice(args, allow_none, typeof):
    accepted_values = set(typeof(value) for value in (0, 1, 4, 6))
    validate_choice = _make_validate_choice(accepted_values, allow_none=allow_none, typeof=typeof)
    raise_error, value = args
    if value is None and not allow_none:
        raise_error = "not one of" if typeof is str else "Could not convert"
    if raise_error:
        with pytest.raises(ValueError, match=raise_error):
            validate_choice(value)
    else:
        value = validate_choice(value)
        assert value in accepted_values or value is None


@pytest.mark.parametrize("length", (4, None))
@pytest.mark.parametrize("value", [(1, 5, 2, 2), (1, 3, 5), "(3, 4, 5, 6)"])
def test_make_iterable_validator_length(value, length):
    validate_iterable = make_iterable_validator(float, length=length)
    n_values = len(value.split(",")) if isinstance(value, str) else len(value)
    if length is not None and n_values != length:
        with pytest.raises(ValueError, match="Iterable must be of length"):
            validate_iterable(value)
    else:
        value = validate_iterable(value)
        assert isinstance(value, tuple)


@pytest.mark.parametrize(
    "args",
    [
        ("Only ordered iterable", {1.0, 2.0}),
        ("Only ordered iterable", 15),
    ],
)
def test_make_iterable_validator_illegal(args):
    validate_iterable = make_iterable_validator(float)
    raise_error, value = args
    with pytest.raises(ValueError, match=raise_error):
        validate_iterable(value)


@pytest.mark.parametrize(
    "args",
    [
        ("Only positive", -1),
        ("Only positive", 0),
        ("Could not convert", "1.3"),
        ("Could not convert", True),
        (False, "2"),
        (False, 1),
    ],
)
def test_validate_positive_int(args):
    raise_error, value = args
    if raise_error:
        with pytest.raises(ValueError, match=raise_error):
            _validate_positive_int(value)
    else:
        assert isinstance(_validate_positive_int(value), int)


@pytest.mark.parametrize(
    "args",
    [
        ("Only.+between 0 and 1", -1),
        ("Only.+between 0 and 1", "1.3"),
        ("not convert to float", "word"),
        (False, "0.6"),
        (False, 0),
        (False, 1),
    ],
)
def test_validate_probability(args):
    raise_error, value = args
    if raise_error:
        with pytest.raises(ValueError, match=raise_error):
            _validate_probability(value)
    else:
        assert isinstance(_validate_probability(value), float)


def test_validate_resolution():
    assert _validate_resolution("64") == 64
    with pytest.raises(ValueError, match="below 16"):
        _validate_resolution(8)


@pytest.mark.parametrize("value", ["ncc", "NCC", "my-matcher_2"])
def test_validate_matcher_key(value):
    assert _validate_matcher_key(value) == value.lower()


@pytest.mark.parametrize("value", ["", "2ncc", "has space", 3])
def test_validate_matcher_key_invalid(value):
    with pytest.raises(ValueError, match="not a valid matcher key"):
        _validate_matcher_key(value)


@pytest.mark.parametrize(
    "key, value",
    [
        ("ransac.min_inlier_fraction", 0),
        ("ransac.confidence", 1),
        ("region.out_resolution", 15),
        ("region.pad_value", 1.5),
        ("kalman.process_noise", (1, 1, 1)),
        ("kalman.measurement_noise", (-1, 1)),
        ("region.velocity_threshold", np.inf),
    ],
)
def test_invalid_values(key, value):
    with pytest.raises(ValueError, match=f"Key {key}"):
        rcParams[key] = value


## Some simple integration checks with rcparams
def test_tracker_config_from_rcparams():
    with rc_context(
        rc={
            "tracker.n": 4,
            "tracker.mode": "baseline",
            "ransac.inlier_threshold": 1.5,
            "ransac.seed": 3,
            "region.velocity_threshold": 8,
            "matcher.failure_threshold": 0.5,
        }
    ):
        cfg = TrackerConfig.from_rcparams()
    assert cfg.n == 4
    assert cfg.mode == "baseline"
    assert cfg.ransac.inlier_threshold == 1.5
    assert cfg.ransac.rng_seed == 3
    assert cfg.region.velocity_threshold == 8
    assert cfg.matcher.failure_threshold == 0.5


def test_ransac_config_from_rcparams():
    with rc_context(rc={"ransac.max_iterations": 50, "ransac.confidence": 0.9}):
        cfg = RansacConfig.from_rcparams()
    assert cfg.max_iterations == 50
    assert cfg.confidence == 0.9
