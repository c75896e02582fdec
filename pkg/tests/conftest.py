# pylint: disable=redefined-outer-name
"""Test configuration and global fixtures."""

import pytest

from pts_track import RotatedBox
from pts_track.synth import get_scenario
from pts_track.testing import planted_homography, textured_image


@pytest.fixture(scope="module")
def textured_frame():
    """Smooth random frame of shape (120, 160)."""
    return textured_image((120, 160), seed=5)


@pytest.fixture(scope="module")
def planted():
    """Rotation plus translation with a 10 degree bound."""
    return planted_homography(seed=42, max_translation=20, max_angle=10)


@pytest.fixture
def square_box():
    return RotatedBox.from_xywh(10, 20, 10, 10)


@pytest.fixture(scope="module")
def static_scenario():
    return get_scenario("static", n_frames=12)
