# pylint: disable=redefined-outer-name, protected-access
import numpy as np
import pytest

from pts_track import matcher
from pts_track.errors import (
    EmptyMaskError,
    TemplateLargerThanPatchError,
    ZeroVarianceTemplateError,
)
from pts_track.matcher import (
    MatcherConfig,
    NCCMatcher,
    ResponseMap,
    fit_rotated_box,
    get_matcher,
    list_matchers,
    match_template,
    objectness,
    register_matcher,
    rescale_template,
    segment_response,
    select_peak,
)
from pts_track.types import BinaryMask, Point2


@pytest.fixture(scope="module")
def scene():
    """Noise patch with a 16x16 template planted with its top-left pixel at (x=10, y=4)."""
    rng = np.random.default_rng(3)
    patch = rng.random((60, 60))
    template = patch[4:20, 10:26].copy()
    return template, patch


def plant(template, shape, origins, seed=0):
    rng = np.random.default_rng(seed)
    patch = rng.random(shape)
    h, w = template.shape
    for x, y in origins:
        patch[y : y + h, x : x + w] = template
    return patch


class TestMatchTemplate:
    def test_self_match(self):
        template = np.random.default_rng(0).random((12, 9))
        response = match_template(template, template)
        assert response.shape == (1, 1)
        assert response.scores[0, 0] == pytest.approx(1)

    def test_planted(self, scene):
        template, patch = scene
        response = match_template(template, patch)
        assert response.shape == (45, 45)
        assert response.argmax() == (4, 10)
        assert response.scores[4, 10] == pytest.approx(1)
        assert response.window_origin((4, 10)) == Point2(10, 4)
        assert response.window_center((4, 10)) == Point2(17.5, 11.5)

    def test_scores_bounded(self, scene):
        template, patch = scene
        scores = match_template(template, patch).scores
        assert np.all(scores >= -1)
        assert np.all(scores <= 1)

    def test_affine_invariance(self, scene):
        template, patch = scene
        base = match_template(template, patch).scores
        scaled = match_template(template, 2.5 * patch + 0.3).scores
        np.testing.assert_allclose(scaled, base, atol=1e-9)

    def test_translation_consistent(self):
        template = np.random.default_rng(1).random((10, 10))
        first = match_template(template, plant(template, (50, 50), [(7, 3)])).argmax()
        second = match_template(template, plant(template, (50, 50), [(10, 8)])).argmax()
        assert first == (3, 7)
        assert second == (first[0] + 5, first[1] + 3)

    def test_flat_windows_score_zero(self):
        template = np.random.default_rng(2).random((5, 5))
        patch = np.full((20, 20), 0.5)
        scores = match_template(template, patch).scores
        np.testing.assert_array_equal(scores, 0)

    def test_zero_variance_template(self):
        with pytest.raises(ZeroVarianceTemplateError):
            match_template(np.full((5, 5), 0.3), np.random.default_rng(0).random((20, 20)))

    def test_template_larger(self):
        with pytest.raises(TemplateLargerThanPatchError):
            match_template(np.random.default_rng(0).random((21, 5)), np.zeros((20, 20)))


class TestSelectPeak:
    def test_no_window(self, scene):
        template, patch = scene
        response = match_template(template, patch)
        assert select_peak(response) == response.argmax()

    def test_window_prefers_center(self):
        template = np.random.default_rng(4).random((12, 12))
        patch = plant(template, (80, 80), [(2, 2), (34, 34)], seed=5)
        response = match_template(template, patch)
        assert response.shape == (69, 69)
        assert select_peak(response, window_influence=0.4) == (34, 34)


class TestObjectness:
    def test_perfect(self):
        assert objectness(ResponseMap(np.array([[1.0]]), (3, 3))) == 1

    def test_negative(self):
        assert objectness(np.array([[-0.5, -0.1], [-1.0, 0.0]])) == 0

    def test_max(self):
        assert objectness(np.array([[0.1, 0.37], [0.2, -0.3]])) == pytest.approx(0.37)

    def test_empty(self):
        with pytest.raises(ValueError, match="Empty"):
            objectness(np.empty((0, 0)))


class TestSegmentResponse:
    @pytest.fixture
    def template(self):
        return 0.4 + 0.2 * np.random.default_rng(6).random((10, 12))

    def test_exact_occurrence(self, template):
        patch = plant(template, (40, 40), [(5, 8)])
        mask = segment_response(template, patch, (8, 5))
        assert mask.origin == Point2(5, 8)
        assert mask.bits.shape == template.shape
        assert mask.bits.all()

    def test_occluded_half(self, template):
        patch = plant(template, (40, 40), [(5, 8)])
        patch[8:18, 5:11] = 1.0
        mask = segment_response(template, patch, (8, 5))
        assert mask.count == 10 * 6
        assert not mask.bits[:, :6].any()
        assert mask.bits[:, 6:].all()

    def test_largest_component(self, template):
        patch = plant(template, (40, 40), [(5, 8)])
        # split the window in a 10x3 and a 10x8 part
        patch[8:18, 8] = 1.0
        mask = segment_response(template, patch, (8, 5))
        assert mask.count == 10 * 8

    def test_all_different(self, template):
        patch = np.zeros((40, 40))
        patch[8:18, 5:17] = template + 0.5
        mask = segment_response(template, np.clip(patch, 0, 1), (8, 5))
        assert mask.is_empty
        assert mask.origin == Point2(5, 8)

    def test_peak_outside(self, template):
        with pytest.raises(ValueError, match="outside"):
            segment_response(template, np.zeros((40, 40)), (35, 0))


class TestFitRotatedBox:
    def test_rectangle(self):
        box = fit_rotated_box(BinaryMask(np.ones((4, 10), dtype=bool)))
        assert box.area == pytest.approx(27)
        assert box.center.x == pytest.approx(4.5)
        assert box.center.y == pytest.approx(1.5)

    def test_single_pixel(self):
        box = fit_rotated_box(BinaryMask(np.ones((1, 1), dtype=bool), Point2(3, 4)))
        assert box.area == 0
        assert box.center == Point2(3, 4)

    def test_collinear(self):
        box = fit_rotated_box(BinaryMask(np.ones((1, 7), dtype=bool), Point2(2, 2)))
        assert box.area == pytest.approx(0, abs=1e-9)
        assert np.all(box.contains([[2, 2], [8, 2]], tol=1e-6))

    def test_diamond(self):
        rows, cols = np.mgrid[0:61, 0:61]
        bits = np.abs(rows - 30) + np.abs(cols - 30) <= 14
        box = fit_rotated_box(BinaryMask(bits))
        assert box.area == pytest.approx(392)
        tilt = box.angle % (np.pi / 2)
        assert tilt == pytest.approx(np.pi / 4, abs=np.deg2rad(3))

    @pytest.mark.parametrize("seed", range(5))
    def test_encloses_mask(self, seed):
        bits = np.random.default_rng(seed).random((15, 20)) > 0.7
        mask = BinaryMask(bits, Point2(-4, 9))
        box = fit_rotated_box(mask)
        assert np.all(box.contains(mask.pixel_centers(), tol=1e-6))

    def test_empty(self):
        with pytest.raises(EmptyMaskError):
            fit_rotated_box(BinaryMask.empty())


class TestRescaleTemplate:
    def test_unit_scale(self):
        template = np.random.default_rng(7).random((8, 11))
        np.testing.assert_array_equal(rescale_template(template, 1.0), template)

    def test_half_scale(self):
        template = np.random.default_rng(7).random((8, 11))
        rescaled = rescale_template(template, 0.5)
        assert rescaled.shape == (15, 21)
        np.testing.assert_array_equal(rescaled[::2, ::2], template)

    def test_invalid(self):
        with pytest.raises(ValueError, match="positive"):
            rescale_template(np.ones((3, 3)), 0)


class TestNCCMatcher:
    def test_match(self, scene):
        template, patch = scene
        result = NCCMatcher(MatcherConfig(window_influence=0.0)).match(template, patch)
        assert result.peak == (4, 10)
        assert result.score == pytest.approx(1)
        assert result.mask.count == template.size
        assert result.box.area == pytest.approx(15 * 15)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            MatcherConfig(pixel_tolerance=0)
        with pytest.raises(ValueError):
            MatcherConfig(window_influence=1.5)


class TestRegistry:
    def test_default(self):
        assert isinstance(get_matcher(), NCCMatcher)
        assert "ncc" in list_matchers()

    def test_unknown(self):
        with pytest.raises(KeyError, match="Unknown matcher"):
            get_matcher("sift")

    def test_register(self, monkeypatch):
        monkeypatch.setattr(matcher, "_MATCHERS", dict(matcher._MATCHERS))
        register_matcher("Strict", lambda cfg: NCCMatcher(MatcherConfig(pixel_tolerance=0.01)))
        assert "strict" in list_matchers()
        assert get_matcher("strict").cfg.pixel_tolerance == 0.01
