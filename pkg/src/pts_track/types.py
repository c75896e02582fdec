"""pts-track shared value types.

Pixel convention used across the package: pixel ``(row, col)`` has its center at
the continuous coordinate ``(x=col, y=row)``.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

__all__ = ["Image", "Point2", "PointMatch", "BinaryMask", "RotatedBox"]

Image = NDArray[np.floating]
"""Grayscale image, a 2D float array (height, width) of intensities in [0, 1]."""


class Point2(NamedTuple):
    """Point in pixel coordinates."""

    x: float
    y: float


class PointMatch(NamedTuple):
    """Correspondence between a point of the reference frame and the pending frame."""

    src: Point2
    dst: Point2


def _frozen_array(values, shape=None, dtype=float):
    ary = np.array(values, dtype=dtype)
    if shape is not None:
        ary = ary.reshape(shape)
    ary.setflags(write=False)
    return ary


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Binary segmentation anchored at `origin`.

    Attributes
    ----------
    bits : ndarray of bool, shape (height, width)
    origin : Point2
        Coordinates of the center of pixel ``bits[0, 0]``.
    """

    bits: NDArray[np.bool_]
    origin: Point2 = field(default=Point2(0.0, 0.0))

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2:
            raise ValueError(f"Mask bits must be 2D, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen_array(bits, dtype=bool))
        object.__setattr__(self, "origin", Point2(float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def empty(cls, origin=Point2(0.0, 0.0)):
        """Create a mask without foreground pixels."""
        return cls(np.zeros((0, 0), dtype=bool), origin)

    @property
    def width(self):
        """Width in pixels."""
        return self.bits.shape[1]

    @property
    def height(self):
        """Height in pixels."""
        return self.bits.shape[0]

    @property
    def count(self):
        """Number of foreground pixels."""
        return int(self.bits.sum())

    @property
    def is_empty(self):
        """Whether the mask has no foreground pixels."""
        return self.count == 0

    def pixel_centers(self):
        """Get the (x, y) coordinates of the foreground pixel centers.

        Returns
        -------
        ndarray of float, shape (n, 2)
        """
        rows, cols = np.nonzero(self.bits)
        return np.column_stack((cols + self.origin.x, rows + self.origin.y)).astype(float)

    def translated(self, dx, dy):
        """Return the same mask shifted by ``(dx, dy)``."""
        return BinaryMask(self.bits, Point2(self.origin.x + dx, self.origin.y + dy))


@dataclass(frozen=True, eq=False)
class RotatedBox:
    """Quadrilateral given by its 4 corners in winding order.

    Attributes
    ----------
    corners : ndarray of float, shape (4, 2)
        ``(x, y)`` of each corner.
    """

    corners: NDArray[np.floating]

    def __post_init__(self):
        corners = np.asarray(self.corners, dtype=float)
        if corners.shape != (4, 2):
            try:
                corners = corners.reshape(4, 2)
            except ValueError as err:
                raise ValueError(
                    f"A rotated box needs 4 corners, got array of shape {corners.shape}"
                ) from err
        if not np.all(np.isfinite(corners)):
            raise ValueError("Box corners must be finite")
        object.__setattr__(self, "corners", _frozen_array(corners))

    @classmethod
    def from_xywh(cls, x, y, w, h):
        """Create an axis aligned box from its top-left corner, width and height."""
        return cls([[x, y], [x + w, y], [x + w, y + h], [x, y + h]])

    @property
    def center(self):
        """Mean of the 4 corners."""
        cx, cy = self.corners.mean(axis=0)
        return Point2(float(cx), float(cy))

    @property
    def area(self):
        """Area enclosed by the corners (shoelace formula)."""
        x, y = self.corners[:, 0], self.corners[:, 1]
        return float(0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    @property
    def angle(self):
        """Orientation in radians of the edge from corner 0 to corner 1, in [0, pi)."""
        dx, dy = self.corners[1] - self.corners[0]
        return float(np.arctan2(dy, dx) % np.pi)

    def bounds(self):
        """Get ``(xmin, ymin, xmax, ymax)`` of the axis aligned hull."""
        xmin, ymin = self.corners.min(axis=0)
        xmax, ymax = self.corners.max(axis=0)
        return float(xmin), float(ymin), float(xmax), float(ymax)

    def contains(self, points, tol=1e-9):
        """Check which points lie inside the box or on its border.

        Parameters
        ----------
        points : array_like of shape (n, 2)
        tol : float, default 1e-9

        Returns
        -------
        ndarray of bool, shape (n,)
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        edges = np.roll(self.corners, -1, axis=0) - self.corners
        rel = points[:, None, :] - self.corners[None, :, :]
        cross = edges[None, :, 0] * rel[..., 1] - edges[None, :, 1] * rel[..., 0]
        same_side = np.all(cross >= -tol, axis=1) | np.all(cross <= tol, axis=1)
        xmin, ymin, xmax, ymax = self.bounds()
        in_hull = (
            (points[:, 0] >= xmin - tol)
            & (points[:, 0] <= xmax + tol)
            & (points[:, 1] >= ymin - tol)
            & (points[:, 1] <= ymax + tol)
        )
        return same_side & in_hull

    def translated(self, dx, dy):
        """Return the same box shifted by ``(dx, dy)``."""
        return RotatedBox(self.corners + np.array([dx, dy]))
