"""Appearance matchers.

A matcher receives the object template and a search patch and returns a binary
mask, a rotated box and an objectness score in patch coordinates. Matchers are
plug-ins selected by key; ``"ncc"`` is the zero-mean normalized cross-correlation
matcher implemented here.
"""

from collections.abc import Callable
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol

import lazy_loader as _lazy
import numpy as np
from numpy.typing import NDArray

from pts_track.errors import (
    EmptyMaskError,
    TemplateLargerThanPatchError,
    ZeroVarianceTemplateError,
)
from pts_track.rcparams import rcParams
from pts_track.types import BinaryMask, Image, Point2, RotatedBox

if TYPE_CHECKING:
    import scipy
else:
    scipy = _lazy.load("scipy")

__all__ = [
    "Matcher",
    "MatcherConfig",
    "MatchResult",
    "ResponseMap",
    "NCCMatcher",
    "match_template",
    "select_peak",
    "segment_response",
    "fit_rotated_box",
    "objectness",
    "rescale_template",
    "register_matcher",
    "get_matcher",
    "list_matchers",
]

_FLAT_WINDOW_TOL = 1e-9


@dataclass(frozen=True)
class MatcherConfig:
    """Thresholds shared by the matchers.

    Attributes
    ----------
    pixel_tolerance : float, default 0.15
        Maximum absolute intensity difference for a pixel to belong to the mask.
    failure_threshold : float, default 0.25
        Objectness below which the pipeline declares the frame failed.
    window_influence : float, default 0.4
        Weight of the cosine window when selecting the response peak.
    """

    pixel_tolerance: float = 0.15
    failure_threshold: float = 0.25
    window_influence: float = 0.4

    def __post_init__(self):
        if not self.pixel_tolerance > 0:
            raise ValueError("pixel_tolerance must be positive")
        if not 0 <= self.failure_threshold <= 1:
            raise ValueError("failure_threshold must be in [0, 1]")
        if not 0 <= self.window_influence <= 1:
            raise ValueError("window_influence must be in [0, 1]")

    @classmethod
    def from_rcparams(cls):
        """Create the configuration from the current ``matcher.*`` rcParams."""
        params = rcParams.section("matcher")
        return cls(
            pixel_tolerance=params["pixel_tolerance"],
            failure_threshold=params["failure_threshold"],
            window_influence=params["window_influence"],
        )


@dataclass(frozen=True, eq=False)
class ResponseMap:
    """Template similarity for every placement of the template in the patch.

    Cell ``(row, col)`` corresponds to the template window whose top-left pixel
    is patch pixel ``(row, col)``, so the stride is 1 and the offset is 0.

    Attributes
    ----------
    scores : ndarray of shape (patch_h - h + 1, patch_w - w + 1)
        Values in [-1, 1].
    template_shape : tuple of (int, int)
        ``(h, w)`` of the template.
    """

    scores: NDArray[np.floating]
    template_shape: tuple[int, int]

    @property
    def shape(self):
        """Shape of the score array."""
        return self.scores.shape

    def window_origin(self, cell):
        """Patch coordinates ``(x, y)`` of the top-left template pixel for `cell`."""
        row, col = cell
        return Point2(float(col), float(row))

    def window_center(self, cell):
        """Patch coordinates of the center of the template window at `cell`."""
        row, col = cell
        h, w = self.template_shape
        return Point2(col + (w - 1) / 2, row + (h - 1) / 2)

    def argmax(self):
        """Cell with the highest raw score."""
        row, col = np.unravel_index(np.argmax(self.scores), self.scores.shape)
        return int(row), int(col)


@dataclass(frozen=True, eq=False)
class MatchResult:
    """Output of a matcher, all in patch coordinates.

    Attributes
    ----------
    mask : BinaryMask
    box : RotatedBox
        Minimum area rectangle around the mask, or the template footprint when
        the mask is empty.
    score : float
        Objectness in [0, 1].
    peak : tuple of (int, int)
        Selected response cell.
    response : ResponseMap
    """

    mask: BinaryMask
    box: RotatedBox
    score: float
    peak: tuple[int, int]
    response: ResponseMap


class Matcher(Protocol):
    """Interface of the appearance matchers.

    Implementations must be stateless after construction.
    """

    def match(self, template: Image, patch: Image) -> MatchResult: ...  # noqa: D102


def _window_sums(image, shape):
    """Sum over every ``shape`` window of `image` (valid placements) with integral images."""
    h, w = shape
    integral = np.zeros((image.shape[0] + 1, image.shape[1] + 1))
    integral[1:, 1:] = np.cumsum(np.cumsum(image, axis=0), axis=1)
    return integral[h:, w:] - integral[:-h, w:] - integral[h:, :-w] + integral[:-h, :-w]


def match_template(template, patch):
    """Zero-mean normalized cross-correlation of `template` over `patch`.

    Parameters
    ----------
    template : Image
    patch : Image
        At least as large as the template along both axes.

    Returns
    -------
    ResponseMap
        Windows with constant intensity score 0.

    Raises
    ------
    TemplateLargerThanPatchError
    ZeroVarianceTemplateError

    Examples
    --------
    .. code-block:: python

        rng = np.random.default_rng(3)
        patch = rng.random((40, 40))
        response = match_template(patch[4:20, 10:26], patch)
        response.argmax()
        # (4, 10)
    """
    template = np.asarray(template, dtype=float)
    patch = np.asarray(patch, dtype=float)
    if template.ndim != 2 or patch.ndim != 2:
        raise ValueError("Template and patch must be 2D images")
    if template.shape[0] > patch.shape[0] or template.shape[1] > patch.shape[1]:
        raise TemplateLargerThanPatchError(
            f"Template of shape {template.shape} does not fit in patch of shape {patch.shape}"
        )
    n_pixels = template.size
    centered = template - template.mean()
    template_ss = np.sum(centered**2)
    if template_ss <= _FLAT_WINDOW_TOL * n_pixels:
        raise ZeroVarianceTemplateError("Template has constant intensity")

    numerator = scipy.signal.correlate(patch, centered, mode="valid", method="auto")
    window_sum = _window_sums(patch, template.shape)
    window_sq = _window_sums(patch**2, template.shape)
    window_ss = np.clip(window_sq - window_sum**2 / n_pixels, 0, None)
    flat = window_ss <= _FLAT_WINDOW_TOL * n_pixels
    denominator = np.sqrt(np.where(flat, 1.0, window_ss) * template_ss)
    scores = np.where(flat, 0.0, numerator / denominator)
    return ResponseMap(np.clip(scores, -1.0, 1.0), template.shape)


def select_peak(response, window_influence=0.0):
    """Select the response cell, favoring the center of the map.

    The peak maximizes ``(1 - wi) * score + wi * hanning`` where ``hanning`` is the
    outer product of two Hann windows spanning the map.

    Parameters
    ----------
    response : ResponseMap
    window_influence : float, default 0

    Returns
    -------
    tuple of (int, int)
    """
    rows, cols = response.shape
    if window_influence == 0:
        return response.argmax()
    hann = np.outer(np.hanning(rows + 2)[1:-1], np.hanning(cols + 2)[1:-1])
    combined = (1 - window_influence) * response.scores + window_influence * hann
    row, col = np.unravel_index(np.argmax(combined), combined.shape)
    return int(row), int(col)


def objectness(response):
    """Largest response score clamped to [0, 1]."""
    scores = response.scores if isinstance(response, ResponseMap) else np.asarray(response)
    if scores.size == 0:
        raise ValueError("Empty response map")
    return float(np.clip(np.max(scores), 0.0, 1.0))


def segment_response(template, patch, peak, pixel_tolerance=0.15):
    """Segment the object in the template window at `peak`.

    Pixels whose absolute difference with the aligned template pixel is below
    `pixel_tolerance` are candidates and the largest 4-connected component of them
    is kept.

    Parameters
    ----------
    template : Image
    patch : Image
    peak : tuple of (int, int)
        Response cell ``(row, col)``.
    pixel_tolerance : float, default 0.15

    Returns
    -------
    BinaryMask
        In patch coordinates, possibly empty.
    """
    template = np.asarray(template, dtype=float)
    patch = np.asarray(patch, dtype=float)
    h, w = template.shape
    row, col = peak
    if not (0 <= row <= patch.shape[0] - h and 0 <= col <= patch.shape[1] - w):
        raise ValueError(f"Peak {peak} is outside the response map")
    window = patch[row : row + h, col : col + w]
    close = np.abs(window - template) < pixel_tolerance
    labels, n_labels = scipy.ndimage.label(close)
    if n_labels == 0:
        return BinaryMask.empty(Point2(float(col), float(row)))
    sizes = np.bincount(labels.ravel())[1:]
    largest = labels == (np.argmax(sizes) + 1)
    return BinaryMask(largest, Point2(float(col), float(row)))


def _box_from_frame(points, angle):
    """Axis aligned bounds of `points` in a frame rotated by `angle`, as corners."""
    cos, sin = np.cos(angle), np.sin(angle)
    rotation = np.array([[cos, -sin], [sin, cos]])
    local = points @ rotation
    (xmin, ymin), (xmax, ymax) = local.min(axis=0), local.max(axis=0)
    corners_local = np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]])
    area = (xmax - xmin) * (ymax - ymin)
    return corners_local @ rotation.T, area


def fit_rotated_box(mask):
    """Minimum area rectangle enclosing the foreground pixel centers.

    Candidate orientations are the edge directions of the convex hull
    (rotating calipers).

    Parameters
    ----------
    mask : BinaryMask

    Returns
    -------
    RotatedBox

    Raises
    ------
    EmptyMaskError
    """
    points = mask.pixel_centers()
    if len(points) == 0:
        raise EmptyMaskError("Cannot fit a box to an empty mask")
    unique = np.unique(points, axis=0)
    if len(unique) == 1:
        return RotatedBox(np.repeat(unique, 4, axis=0))
    try:
        hull = scipy.spatial.ConvexHull(unique)
        vertices = unique[hull.vertices]
    except scipy.spatial.QhullError:
        # collinear pixels, the hull degenerates to a segment
        vertices = unique[[0, -1]]
    edges = np.roll(vertices, -1, axis=0) - vertices
    angles = np.unique(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), np.pi / 2))
    best_corners, best_area = None, np.inf
    for angle in angles:
        corners, area = _box_from_frame(unique, angle)
        if area < best_area - 1e-12:
            best_corners, best_area = corners, area
    box = RotatedBox(best_corners)
    assert np.all(box.contains(points, tol=1e-6)), "fitted box must enclose the mask"
    return box


def rescale_template(template, scale):
    """Resample a template to a grid with spacing `scale` template pixels.

    Parameters
    ----------
    template : Image
    scale : float
        Template pixels per output pixel.

    Returns
    -------
    Image
        Bilinear samples at ``j * scale`` along each axis, starting at the first
        template pixel center and not going past the last one.
    """
    if not scale > 0:
        raise ValueError("Template scale must be positive")
    template = np.asarray(template, dtype=float)
    n_rows = int(np.floor((template.shape[0] - 1) / scale + 1e-9)) + 1
    n_cols = int(np.floor((template.shape[1] - 1) / scale + 1e-9)) + 1
    rows = np.arange(n_rows) * scale
    cols = np.arange(n_cols) * scale
    grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
    return scipy.ndimage.map_coordinates(template, [grid_r, grid_c], order=1, mode="nearest")


class NCCMatcher:
    """Normalized cross-correlation matcher.

    Parameters
    ----------
    cfg : MatcherConfig, optional
    """

    def __init__(self, cfg=None):
        self.cfg = MatcherConfig.from_rcparams() if cfg is None else cfg

    def __repr__(self):
        """Show the configuration."""
        return f"NCCMatcher({self.cfg!r})"

    def match(self, template, patch):
        """Locate `template` in `patch`.

        Returns
        -------
        MatchResult
            The score is the raw NCC value at the selected peak clamped to [0, 1].
        """
        patch = np.asarray(patch, dtype=float)
        response = match_template(template, patch)
        peak = select_peak(response, self.cfg.window_influence)
        mask = segment_response(template, patch, peak, self.cfg.pixel_tolerance)
        score = float(np.clip(response.scores[peak], 0.0, 1.0))
        if mask.is_empty:
            h, w = response.template_shape
            box = RotatedBox.from_xywh(peak[1], peak[0], w - 1, h - 1)
        else:
            box = fit_rotated_box(mask)
        return MatchResult(mask, box, score, peak, response)


_MATCHERS: dict[str, Callable[[MatcherConfig | None], Matcher]] = {"ncc": NCCMatcher}


def register_matcher(key, factory):
    """Register a matcher factory under `key`.

    Parameters
    ----------
    key : str
    factory : callable
        Called with a :class:`MatcherConfig` (or ``None``) and returning an
        object implementing :class:`Matcher`.
    """
    _MATCHERS[key.lower()] = factory


def list_matchers():
    """Get the registered matcher keys."""
    return sorted(_MATCHERS)


def get_matcher(key=None, cfg=None):
    """Instantiate the matcher registered under `key`.

    Parameters
    ----------
    key : str, optional
        Defaults to ``rcParams["matcher.key"]``.
    cfg : MatcherConfig, optional

    Raises
    ------
    KeyError
        If no matcher is registered under `key`.
    """
    if key is None:
        key = rcParams["matcher.key"]
    try:
        factory = _MATCHERS[key.lower()]
    except KeyError as err:
        raise KeyError(f"Unknown matcher {key!r}, available: {list_matchers()}") from err
    return factory(cfg)
