# pylint: disable=redefined-outer-name
import numpy as np
import pytest

from pts_track.data import load_sequence, load_truth
from pts_track.errors import SpecError
from pts_track.geometry import Homography, project_points, ransac_homography
from pts_track.synth import (
    CameraSpec,
    ObjectSpec,
    OccluderSpec,
    ScenarioSpec,
    generate,
    get_scenario,
    list_scenarios,
    render_sequence,
    scenario_from_dict,
    standard_suite,
    value_noise,
)


@pytest.fixture(scope="module")
def static_run():
    return generate(get_scenario("static"), seed=0)


@pytest.fixture(scope="module")
def shaky_run():
    spec = get_scenario("camera-shake", n_frames=6, match_noise=0.0, outlier_fraction=0.0)
    return generate(spec, seed=3)


class TestValueNoise:
    def test_range(self):
        texture = value_noise((30, 40), seed=1)
        assert texture.shape == (30, 40)
        assert texture.min() == pytest.approx(0.1)
        assert texture.max() == pytest.approx(0.9)

    def test_seeded(self):
        np.testing.assert_array_equal(value_noise((8, 8), 4), value_noise((8, 8), 4))
        assert not np.array_equal(value_noise((8, 8), 4), value_noise((8, 8), 5))


class TestSuite:
    def test_size(self):
        names = list_scenarios()
        assert len(names) >= 8
        assert names == [name for name, _ in standard_suite()]
        assert {"static", "constant-velocity", "occlusion-full", "distractor-cross"} <= set(names)

    @pytest.mark.parametrize("name", list_scenarios())
    def test_valid(self, name):
        get_scenario(name).validate()

    def test_overrides(self):
        spec = get_scenario("static", n_frames=5)
        assert spec.n_frames == 5
        assert spec.name == "static"

    def test_unknown(self):
        with pytest.raises(KeyError, match="Unknown scenario"):
            get_scenario("hurricane")

    def test_distractor_shares_texture(self):
        spec = get_scenario("distractor-cross")
        assert spec.distractors[0].texture_seed == spec.target.texture_seed
        assert spec.distractors[0].size == spec.target.size


class TestGenerate:
    def test_static(self, static_run):
        frames, truth = static_run
        assert len(frames) == len(truth) == 40
        assert frames[0].shape == (192, 256)
        for t in range(1, 40):
            np.testing.assert_array_equal(frames[t], frames[0])
        np.testing.assert_array_equal(truth.centers, np.tile([128, 96], (40, 1)))
        np.testing.assert_array_equal(truth.velocities, 0)
        np.testing.assert_allclose(
            truth.boxes[0].corners, [[118, 86], [138, 86], [138, 106], [118, 106]]
        )
        np.testing.assert_array_equal(truth.visibility, 1)

    def test_target_pixels(self, static_run):
        frames, _ = static_run
        texture = value_noise((20, 20), 11)
        np.testing.assert_allclose(frames[0][86:106, 118:138], texture)

    def test_deterministic(self):
        spec = get_scenario("camera-shake", n_frames=5)
        first_frames, first = generate(spec, seed=9)
        second_frames, second = generate(spec, seed=9)
        for a, b in zip(first_frames, second_frames):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(first.camera, second.camera)
        for a, b in zip(first.matches, second.matches):
            np.testing.assert_array_equal(a, b)

    def test_seed_changes_camera(self):
        spec = get_scenario("camera-shake", n_frames=3)
        _, first = generate(spec, seed=0)
        _, second = generate(spec, seed=1)
        assert not np.allclose(first.camera[1], second.camera[1])

    def test_constant_velocity(self):
        _, truth = generate(get_scenario("constant-velocity"), seed=0)
        np.testing.assert_allclose(truth.velocities[1:], np.tile([3, 0], (49, 1)))
        np.testing.assert_array_equal(truth.velocities[0], [0, 0])

    def test_acceleration(self):
        _, truth = generate(get_scenario("acceleration"), seed=0)
        speeds = np.hypot(*truth.velocities.T)
        np.testing.assert_allclose(speeds[[1, 15, 16, 30, 31, 45]], [1, 1, 3, 3, 6, 6])

    def test_step_homographies(self, shaky_run):
        _, truth = shaky_run
        np.testing.assert_array_equal(truth.step_homographies[0], np.eye(3))
        for t in range(1, len(truth)):
            composed = truth.step_homographies[t] @ truth.camera[t - 1]
            np.testing.assert_allclose(composed / composed[2, 2], truth.camera[t], atol=1e-9)

    def test_matches_follow_homography(self, shaky_run):
        _, truth = shaky_run
        assert len(truth.matches[0]) == 0
        for t in range(1, len(truth)):
            matches = truth.matches[t]
            assert matches.shape == (200, 4)
            expected = project_points(Homography(truth.step_homographies[t]), matches[:, :2])
            np.testing.assert_allclose(matches[:, 2:], expected, atol=1e-9)

    def test_oracle_recovered_by_ransac(self, shaky_run):
        _, truth = shaky_run
        for t in range(1, len(truth)):
            estimate, inliers = ransac_homography(truth.matches[t], image_size=(256, 192))
            assert len(inliers) == 200
            np.testing.assert_allclose(
                estimate.m, truth.step_homographies[t], rtol=1e-6, atol=1e-6
            )

    def test_gt_follows_camera(self, shaky_run):
        _, truth = shaky_run
        for t in range(len(truth)):
            projected = project_points(Homography(truth.camera[t]), [truth.world_centers[t]])
            np.testing.assert_allclose(truth.centers[t], projected[0])
            np.testing.assert_allclose(truth.boxes[t].center, truth.centers[t], atol=1e-9)

    def test_outliers(self):
        spec = get_scenario("camera-shake", n_frames=3, match_noise=0.0, outlier_fraction=0.25)
        _, truth = generate(spec, seed=0)
        matches = truth.matches[1]
        expected = project_points(Homography(truth.step_homographies[1]), matches[:, :2])
        off = np.hypot(*(matches[:, 2:] - expected).T) > 1e-6
        assert 40 <= off.sum() <= 50

    def test_full_occlusion(self):
        frames, truth = generate(get_scenario("occlusion-full"), seed=0)
        np.testing.assert_array_equal(truth.visibility[20:24], 0)
        assert truth.visibility[19] == 1
        assert truth.visibility[24] == 1
        np.testing.assert_array_equal(frames[21][36:156, 68:188], 0.5)

    def test_partial_occlusion(self):
        _, truth = generate(get_scenario("occlusion-5-frame"), seed=0)
        assert np.all(truth.visibility[15:20] < 1)
        assert truth.visibility[14] == 1
        assert truth.visibility[20] == 1

    def test_ellipse(self):
        target = ObjectSpec(start=(50.0, 50.0), size=(20, 10), texture_seed=2, shape="ellipse")
        _, truth = generate(ScenarioSpec("ellipse", n_frames=2, target=target), seed=0)
        assert 0.7 < truth.visibility[0] < 0.85

    def test_dataset(self, shaky_run):
        _, truth = shaky_run
        ds = truth.to_dataset(attrs={"scenario": "camera-shake"})
        assert ds["camera"].dims == ("frame", "row", "col")
        assert list(ds["n_matches"].values) == [0, 200, 200, 200, 200, 200]


class TestValidation:
    def test_object_leaves_frame(self):
        target = ObjectSpec(start=(200.0, 96.0), segments=((39, (5.0, 0.0)),))
        with pytest.raises(SpecError, match="leaves the frame"):
            ScenarioSpec("runaway", target=target).validate()

    def test_allow_exit(self):
        target = ObjectSpec(start=(200.0, 96.0), segments=((39, (5.0, 0.0)),), allow_exit=True)
        ScenarioSpec("runaway", target=target).validate()

    @pytest.mark.parametrize(
        "changes, match",
        [
            ({"width": 16}, "at least 32x32"),
            ({"n_frames": 0}, "at least one frame"),
            ({"match_noise": -1.0}, "non negative"),
            ({"outlier_fraction": 1.5}, "static"),
            ({"target": ObjectSpec(start=(50.0, 50.0), size=(0, 5))}, "size must be positive"),
            ({"target": ObjectSpec(start=(50.0, 50.0), shape="star")}, "unknown object shape"),
            (
                {"occluders": (OccluderSpec(rect=(0.0, 0.0, -1.0, 4.0), start=0, stop=2),)},
                "invalid occluder",
            ),
        ],
    )
    def test_invalid(self, changes, match):
        with pytest.raises(SpecError, match=match):
            get_scenario("static").replace(**changes).validate()

    def test_generate_validates(self):
        with pytest.raises(SpecError):
            generate(get_scenario("static", n_frames=0))


class TestFromDict:
    def test_full(self):
        spec = scenario_from_dict(
            {
                "name": "custom",
                "n_frames": 10,
                "target": {"start": [60, 60], "size": [12, 8], "segments": [[9, [1, 0.5]]]},
                "camera": {"translation_sigma": 1.0},
                "distractors": [{"start": [100, 100], "texture_seed": 3}],
                "occluders": [{"rect": [10, 10, 5, 5], "start": 2, "stop": 4}],
            }
        )
        assert spec.target.size == (12, 8)
        assert spec.target.segments == ((9, (1.0, 0.5)),)
        assert spec.camera == CameraSpec(translation_sigma=1.0)
        assert spec.distractors[0].texture_seed == 3
        assert spec.occluders[0].rect == (10, 10, 5, 5)

    @pytest.mark.parametrize(
        "mapping",
        [
            [],
            {"n_frames": 3},
            {"name": "x", "fps": 30},
            {"name": "x", "target": {"start": [60, 60], "colour": 1}},
            {"name": "x", "target": {"start": [60, 60], "segments": [[1]]}},
            {"name": "x", "n_frames": 0},
        ],
    )
    def test_invalid(self, mapping):
        with pytest.raises(SpecError):
            scenario_from_dict(mapping)


class TestRenderSequence:
    def test_directory(self, tmp_path):
        spec = get_scenario("constant-velocity", n_frames=4)
        truth = render_sequence(spec, tmp_path / "cv", seed=0)
        bundle = load_sequence(tmp_path / "cv")
        assert len(bundle) == 4
        assert bundle.matches_paths[1].name == "matches_000001.txt"
        frames = bundle.load_frames()
        assert frames[0].shape == (192, 256)
        np.testing.assert_allclose(bundle.gt_boxes[3].corners, truth.boxes[3].corners, atol=1e-4)
        ds = load_truth(tmp_path / "cv" / "truth.json")
        assert ds.attrs["scenario"] == "constant-velocity"
        np.testing.assert_allclose(ds["velocity"].values, truth.velocities)
