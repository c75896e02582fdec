"""Adaptive search regions.

The predicted object center is projected into the pending frame and a square
region whose side grows with the predicted speed is cropped and resampled to a
fixed resolution.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING

import lazy_loader as _lazy
import numpy as np
from numpy.typing import NDArray

from pts_track.errors import NonPositiveExtentError
from pts_track.geometry import apply_homography
from pts_track.rcparams import rcParams
from pts_track.types import BinaryMask, Point2, RotatedBox
from pts_track.validate import validate_image

if TYPE_CHECKING:
    import scipy
else:
    scipy = _lazy.load("scipy")

__all__ = [
    "SearchRegion",
    "RegionConfig",
    "Patch",
    "adaptive_scale",
    "region_size",
    "build_search_region",
    "extract_patch",
]

_SCALE_MIN = np.nextafter(1.0, 3.0)
_SCALE_MAX = np.nextafter(3.0, 1.0)


@dataclass(frozen=True)
class SearchRegion:
    """Square crop of the pending frame.

    Attributes
    ----------
    center : Point2
        Center of the crop in pending-frame pixels.
    side : float
        Side ``S`` of the square in pending-frame pixels.
    out_resolution : int, default 255
        Side of the resampled patch in pixels.
    """

    center: Point2
    side: float
    out_resolution: int = 255

    def __post_init__(self):
        object.__setattr__(self, "center", Point2(float(self.center[0]), float(self.center[1])))
        if not np.isfinite(self.side) or self.side <= 0:
            raise NonPositiveExtentError(f"Search region side must be positive, got {self.side}")
        if self.out_resolution < 16:
            raise ValueError(
                f"Search region resolution must be at least 16, got {self.out_resolution}"
            )

    @property
    def scale(self):
        """Frame pixels per patch pixel."""
        return self.side / self.out_resolution

    def to_frame(self, points):
        """Map patch coordinates to frame coordinates.

        Parameters
        ----------
        points : array_like of shape (n, 2)
            ``(x, y)`` in the patch, pixel ``(row, col)`` having center ``(col, row)``.

        Returns
        -------
        ndarray of shape (n, 2)
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        half = (self.out_resolution - 1) / 2
        return np.asarray(self.center) + (points - half) * self.scale

    def to_patch(self, points):
        """Map frame coordinates to patch coordinates, inverse of :meth:`to_frame`."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        half = (self.out_resolution - 1) / 2
        return (points - np.asarray(self.center)) / self.scale + half


@dataclass(frozen=True)
class RegionConfig:
    """Parameters of the search region.

    Attributes
    ----------
    velocity_threshold : float, default 5.0
        Speed ``T`` in pixels per frame at which the scale factor equals 2.
    out_resolution : int, default 255
    pad_value : float, optional
        Intensity of samples outside the frame. ``None`` uses the frame mean.
    fixed_scale : float, optional
        When given, the scale factor ``k`` ignores the velocity.
    """

    velocity_threshold: float = 5.0
    out_resolution: int = 255
    pad_value: float | None = None
    fixed_scale: float | None = None

    def __post_init__(self):
        if not self.velocity_threshold >= 0:
            raise ValueError("velocity_threshold must be non negative")
        if self.out_resolution < 16:
            raise ValueError("out_resolution must be at least 16")
        if self.fixed_scale is not None and not self.fixed_scale > 0:
            raise NonPositiveExtentError("fixed_scale must be positive")

    @classmethod
    def from_rcparams(cls, adaptive=True):
        """Create the configuration from the current ``region.*`` rcParams.

        Parameters
        ----------
        adaptive : bool, default True
            If False, ``fixed_scale`` takes the value of ``region.fixed_scale``.
        """
        params = rcParams.section("region")
        return cls(
            velocity_threshold=params["velocity_threshold"],
            out_resolution=params["out_resolution"],
            pad_value=params["pad_value"],
            fixed_scale=None if adaptive else params["fixed_scale"],
        )


def adaptive_scale(v, T):  # noqa: N803
    """Velocity dependent scale factor of the search region.

    .. math:: k = 1 + 2 \\operatorname{sigmoid}(\\lVert v \\rVert_2 - T)

    Parameters
    ----------
    v : array_like of shape (2,)
        Predicted velocity in pixels per frame.
    T : float
        Velocity threshold, non negative.

    Returns
    -------
    float
        In the open interval (1, 3), strictly increasing with the speed until the
        logistic function saturates in double precision. Saturated values are held
        one ulp inside the bounds.
    """
    if T < 0:
        raise ValueError(f"Velocity threshold must be non negative, got {T}")
    speed = np.hypot(v[0], v[1])
    # expit is saturated well before +-50
    k = 1 + 2 * scipy.special.expit(np.clip(speed - T, -50.0, 50.0))
    return float(np.clip(k, _SCALE_MIN, _SCALE_MAX))


def region_size(w, h, k):
    """Side of the square search region.

    .. math:: S = k \\sqrt{(w + p)(h + p)}, \\quad p = (w + h) / 2

    Raises
    ------
    NonPositiveExtentError
        If any of `w`, `h`, `k` is not positive.
    """
    if not (w > 0 and h > 0 and k > 0):
        raise NonPositiveExtentError(
            f"Object size and scale must be positive, got w={w}, h={h}, k={k}"
        )
    pad = (w + h) / 2
    return float(k * np.sqrt((w + pad) * (h + pad)))


def build_search_region(center_ref, h_ref_to_pending, w, h, v, cfg=None):
    """Search region for the pending frame.

    Parameters
    ----------
    center_ref : Point2
        Predicted center in reference-frame coordinates.
    h_ref_to_pending : Homography
    w, h : float
        Template width and height in pixels.
    v : array_like of shape (2,)
        Predicted velocity.
    cfg : RegionConfig, optional

    Returns
    -------
    SearchRegion

    Raises
    ------
    PointAtInfinityError
    NonPositiveExtentError
    """
    if cfg is None:
        cfg = RegionConfig.from_rcparams()
    center = apply_homography(h_ref_to_pending, center_ref)
    k = cfg.fixed_scale
    if k is None:
        k = adaptive_scale(v, cfg.velocity_threshold)
    return SearchRegion(center, region_size(w, h, k), cfg.out_resolution)


@dataclass(frozen=True, eq=False)
class Patch:
    """Resampled search region together with its patch to frame mapping.

    Attributes
    ----------
    pixels : ndarray of shape (out_resolution, out_resolution)
    region : SearchRegion
    """

    pixels: NDArray[np.floating]
    region: SearchRegion

    def __array__(self, dtype=None, copy=None):
        """Expose the pixels to numpy."""
        if dtype is None:
            return self.pixels
        return self.pixels.astype(dtype)

    @property
    def shape(self):
        """Shape of the pixel array."""
        return self.pixels.shape

    def to_frame(self, points):
        """Map patch coordinates to frame coordinates."""
        return self.region.to_frame(points)

    def to_patch(self, points):
        """Map frame coordinates to patch coordinates."""
        return self.region.to_patch(points)

    def point_to_frame(self, point):
        """Map a single patch point to a frame :class:`Point2`."""
        x, y = self.region.to_frame([point])[0]
        return Point2(float(x), float(y))

    def box_to_frame(self, box):
        """Map a box in patch coordinates to frame coordinates."""
        return RotatedBox(self.region.to_frame(box.corners))

    def mask_to_frame(self, mask):
        """Resample a patch-space mask on the frame pixel grid.

        Each frame pixel whose center falls on a foreground patch pixel
        (nearest neighbour) is foreground.

        Returns
        -------
        BinaryMask
            Mask anchored at an integer frame pixel, empty when no frame pixel
            center is covered.
        """
        centers = mask.pixel_centers()
        if len(centers) == 0:
            return BinaryMask.empty()
        half_pixel = 0.5 * np.ones(2)
        corners = self.region.to_frame(np.vstack((centers - half_pixel, centers + half_pixel)))
        xmin, ymin = np.floor(corners.min(axis=0)).astype(int)
        xmax, ymax = np.ceil(corners.max(axis=0)).astype(int)
        xs = np.arange(xmin, xmax + 1)
        ys = np.arange(ymin, ymax + 1)
        grid_x, grid_y = np.meshgrid(xs, ys)
        patch_xy = self.region.to_patch(np.column_stack((grid_x.ravel(), grid_y.ravel())))
        cols = np.floor(patch_xy[:, 0] - mask.origin.x + 0.5).astype(int)
        rows = np.floor(patch_xy[:, 1] - mask.origin.y + 0.5).astype(int)
        valid = (cols >= 0) & (cols < mask.width) & (rows >= 0) & (rows < mask.height)
        bits = np.zeros(len(patch_xy), dtype=bool)
        bits[valid] = mask.bits[rows[valid], cols[valid]]
        bits = bits.reshape(grid_x.shape)
        if not bits.any():
            return BinaryMask.empty()
        rows, cols = np.nonzero(bits)
        r0, r1, c0, c1 = rows.min(), rows.max(), cols.min(), cols.max()
        return BinaryMask(
            bits[r0 : r1 + 1, c0 : c1 + 1], Point2(float(xs[c0]), float(ys[r0]))
        )


def extract_patch(frame, region, pad_value=None):
    """Sample the search region with bilinear interpolation.

    Parameters
    ----------
    frame : Image
    region : SearchRegion
    pad_value : float, optional
        Intensity used outside the frame. Defaults to the frame mean.

    Returns
    -------
    Patch
        ``out_resolution x out_resolution`` pixels plus the affine map between
        patch and frame coordinates.
    """
    frame = validate_image(frame, "frame")
    if pad_value is None:
        pad_value = float(frame.mean())
    idx = np.arange(region.out_resolution)
    offsets = (idx - (region.out_resolution - 1) / 2) * region.scale
    rows = region.center.y + offsets
    cols = region.center.x + offsets
    grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
    pixels = scipy.ndimage.map_coordinates(
        frame, [grid_r, grid_c], order=1, mode="grid-constant", cval=pad_value
    )
    return Patch(pixels, region)
