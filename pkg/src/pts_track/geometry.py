"""Homography estimation between a pending frame and its reference frame.

The homography is fitted with the normalized direct linear transform and made robust
with RANSAC. RANSAC hypotheses draw one correspondence from each quadrant of the
reference frame, which spreads the minimal sample over the background.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from pts_track.errors import (
    DegenerateConfigurationError,
    NoConsensusError,
    PointAtInfinityError,
    SingularMatrixError,
)
from pts_track.rcparams import rcParams
from pts_track.types import Point2, PointMatch

__all__ = [
    "Homography",
    "RansacConfig",
    "apply_homography",
    "compose_homographies",
    "estimate_homography",
    "homography_jacobian",
    "invert_homography",
    "matches_from_arrays",
    "project_points",
    "ransac_homography",
    "reprojection_errors",
]

_log = logging.getLogger(__name__)

_EPS = 1e-12
_MAX_REFINEMENTS = 5


@dataclass(frozen=True, eq=False)
class Homography:
    """Projective map between two frames.

    The matrix is stored normalized so that ``m[2, 2] == 1``.

    Attributes
    ----------
    m : ndarray of float, shape (3, 3)
    """

    m: NDArray[np.floating]

    def __post_init__(self):
        m = np.array(self.m, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise DegenerateConfigurationError("Homography entries must be finite")
        if abs(m[2, 2]) < _EPS:
            raise DegenerateConfigurationError(
                "Homography with m[2][2] = 0 cannot be normalized"
            )
        m = m / m[2, 2]
        m[2, 2] = 1.0
        if abs(np.linalg.det(m)) <= _EPS:
            raise DegenerateConfigurationError("Homography matrix is singular")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls):
        """Get the identity map."""
        return cls(np.eye(3))

    @classmethod
    def from_matrix(cls, m):
        """Build a homography from any non singular 3x3 matrix, rescaling it."""
        return cls(np.asarray(m, dtype=float))

    @classmethod
    def translation(cls, tx, ty):
        """Get the map ``(x, y) -> (x + tx, y + ty)``."""
        return cls([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])

    def is_identity(self, atol=0.0):
        """Check whether the map is the identity within `atol` elementwise."""
        return bool(np.allclose(self.m, np.eye(3), rtol=0, atol=atol))

    def __repr__(self):
        """Show the matrix rows."""
        rows = ", ".join(np.array2string(row, precision=6, separator=", ") for row in self.m)
        return f"Homography([{rows}])"


@dataclass(frozen=True)
class RansacConfig:
    """Parameters of :func:`ransac_homography`.

    Attributes
    ----------
    max_iterations : int
        Upper bound on the number of minimal-sample hypotheses.
    inlier_threshold : float
        Maximum reprojection distance in pixels for a match to count as inlier.
    min_inlier_fraction : float
        Smallest accepted fraction of inliers, in (0, 1].
    rng_seed : int
        Seed of the sampling generator.
    confidence : float
        Probability of having drawn at least one all-inlier sample used for
        early termination.
    """

    max_iterations: int = 500
    inlier_threshold: float = 3.0
    min_inlier_fraction: float = 0.3
    rng_seed: int = 0
    confidence: float = 0.99

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")
        if not 0 < self.min_inlier_fraction <= 1:
            raise ValueError("min_inlier_fraction must be in (0, 1]")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must be in (0, 1)")

    @classmethod
    def from_rcparams(cls):
        """Create the configuration from the current ``ransac.*`` rcParams."""
        params = rcParams.section("ransac")
        return cls(
            max_iterations=params["max_iterations"],
            inlier_threshold=params["inlier_threshold"],
            min_inlier_fraction=params["min_inlier_fraction"],
            rng_seed=params["seed"],
            confidence=params["confidence"],
        )


def _as_arrays(matches):
    """Split correspondences into source and destination arrays of shape (n, 2)."""
    if isinstance(matches, np.ndarray):
        ary = np.asarray(matches, dtype=float).reshape(-1, 4)
        src, dst = ary[:, :2], ary[:, 2:]
    else:
        matches = list(matches)
        if not matches:
            return np.empty((0, 2)), np.empty((0, 2))
        src = np.array([match.src for match in matches], dtype=float)
        dst = np.array([match.dst for match in matches], dtype=float)
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise DegenerateConfigurationError("Correspondences must have finite coordinates")
    return src, dst


def _normalization_transform(points):
    """Similarity moving the centroid to the origin with mean distance sqrt(2)."""
    centroid = points.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(points - centroid, axis=1))
    if mean_dist < _EPS:
        raise DegenerateConfigurationError("All correspondences are coincident")
    scale = np.sqrt(2) / mean_dist
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def _transform(m, points):
    """Project points through a 3x3 matrix, returning coordinates and homogeneous w."""
    homogeneous = points @ m[:, :2].T + m[:, 2]
    return homogeneous[:, :2], homogeneous[:, 2]


def _dlt(src, dst):
    """Normalized DLT on already split arrays."""
    if len(src) < 4:
        raise DegenerateConfigurationError(
            f"At least 4 correspondences are needed, got {len(src)}"
        )
    t_src = _normalization_transform(src)
    t_dst = _normalization_transform(dst)
    src_n, _ = _transform(t_src, src)
    dst_n, _ = _transform(t_dst, dst)
    x, y = src_n.T
    u, v = dst_n.T
    zeros = np.zeros_like(x)
    ones = np.ones_like(x)
    design = np.empty((2 * len(src), 9))
    design[0::2] = np.column_stack((-x, -y, -ones, zeros, zeros, zeros, u * x, u * y, u))
    design[1::2] = np.column_stack((zeros, zeros, zeros, -x, -y, -ones, v * x, v * y, v))
    _, singular_values, vt = np.linalg.svd(design)
    # a well posed system leaves a one dimensional null space
    if singular_values[7] <= 1e-10 * singular_values[0]:
        raise DegenerateConfigurationError(
            "Correspondences are collinear or coincident, the homography is not determined"
        )
    h_norm = vt[-1].reshape(3, 3)
    return Homography(np.linalg.solve(t_dst, h_norm @ t_src))


def estimate_homography(matches):
    """Least squares homography from 4 or more correspondences.

    Parameters
    ----------
    matches : sequence of PointMatch or array_like of shape (n, 4)
        Correspondences ``src -> dst``. Arrays hold ``sx, sy, dx, dy`` rows.

    Returns
    -------
    Homography
        Map from source (reference frame) to destination (pending frame)
        coordinates minimizing the algebraic residual with Hartley normalization.

    Raises
    ------
    DegenerateConfigurationError
        With fewer than 4 matches or when the points are collinear or coincident.
    """
    src, dst = _as_arrays(matches)
    return _dlt(src, dst)


def project_points(h, points):
    """Apply a homography to an array of points.

    Parameters
    ----------
    h : Homography
    points : array_like of shape (n, 2)

    Returns
    -------
    ndarray of shape (n, 2)

    Raises
    ------
    PointAtInfinityError
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    xy, w = _transform(h.m, points)
    if np.any(np.abs(w) <= _EPS):
        raise PointAtInfinityError("Point is mapped to the line at infinity")
    return xy / w[:, None]


def apply_homography(h, p):
    """Project a single point.

    Parameters
    ----------
    h : Homography
    p : Point2

    Returns
    -------
    Point2

    Raises
    ------
    PointAtInfinityError
        If the homogeneous coordinate vanishes (``|w| <= 1e-12``).
    """
    m = h.m
    x, y = float(p[0]), float(p[1])
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(w) <= _EPS:
        raise PointAtInfinityError(f"Point ({x}, {y}) is mapped to the line at infinity")
    return Point2(
        float((m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w),
        float((m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w),
    )


def invert_homography(h):
    """Get the inverse map, normalized to ``m[2][2] = 1``.

    Raises
    ------
    SingularMatrixError
    """
    if abs(np.linalg.det(h.m)) <= _EPS:
        raise SingularMatrixError("Homography is not invertible")
    inverse = np.linalg.inv(h.m)
    if abs(inverse[2, 2]) < _EPS:
        raise SingularMatrixError("Inverse homography cannot be normalized to m[2][2] = 1")
    return Homography(inverse)


def compose_homographies(outer, inner):
    """Get the map applying `inner` first and then `outer`."""
    return Homography(outer.m @ inner.m)


def homography_jacobian(h, p):
    """Jacobian of the projective map at `p`.

    Returns
    -------
    ndarray of shape (2, 2)
        ``J[i, j]`` is the derivative of output coordinate ``i`` with respect
        to input coordinate ``j``.
    """
    m = h.m
    x, y = float(p[0]), float(p[1])
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(w) <= _EPS:
        raise PointAtInfinityError(f"Point ({x}, {y}) is mapped to the line at infinity")
    u = m[0, 0] * x + m[0, 1] * y + m[0, 2]
    v = m[1, 0] * x + m[1, 1] * y + m[1, 2]
    return np.array(
        [
            [m[0, 0] * w - u * m[2, 0], m[0, 1] * w - u * m[2, 1]],
            [m[1, 0] * w - v * m[2, 0], m[1, 1] * w - v * m[2, 1]],
        ]
    ) / (w * w)


def _errors(m, src, dst):
    xy, w = _transform(m, src)
    errors = np.full(len(src), np.inf)
    finite = np.abs(w) > _EPS
    errors[finite] = np.linalg.norm(xy[finite] / w[finite, None] - dst[finite], axis=1)
    return errors


def reprojection_errors(h, matches):
    """Euclidean distance between ``h(src)`` and ``dst`` for every match.

    Matches whose source is sent to infinity get an infinite error.

    Returns
    -------
    ndarray of shape (n,)
    """
    src, dst = _as_arrays(matches)
    return _errors(h.m, src, dst)


def _quadrant_buckets(src, image_size):
    """Indexes of the matches falling in each quadrant of the reference frame.

    Returns ``None`` when a quadrant is empty.
    """
    if image_size is None:
        xmin, ymin = src.min(axis=0)
        xmax, ymax = src.max(axis=0)
        cx, cy = (xmin + xmax) / 2, (ymin + ymax) / 2
    else:
        width, height = image_size
        cx, cy = width / 2, height / 2
    quadrant = (src[:, 0] >= cx).astype(int) + 2 * (src[:, 1] >= cy).astype(int)
    buckets = [np.flatnonzero(quadrant == idx) for idx in range(4)]
    if any(len(bucket) == 0 for bucket in buckets):
        return None
    return buckets


def _required_iterations(inlier_ratio, confidence, current_max):
    if inlier_ratio >= 1:
        return 1
    all_inlier_prob = inlier_ratio**4
    if all_inlier_prob <= 0:
        return current_max
    needed = np.log(1 - confidence) / np.log1p(-all_inlier_prob)
    return int(min(current_max, max(1, np.ceil(needed))))


def ransac_homography(matches, cfg=None, image_size=None):
    """Robust homography with quadrant-stratified RANSAC.

    Parameters
    ----------
    matches : sequence of PointMatch or array_like of shape (n, 4)
    cfg : RansacConfig, optional
        Defaults to :meth:`RansacConfig.from_rcparams`.
    image_size : tuple of (int, int), optional
        ``(width, height)`` of the reference frame, used to define the quadrants.
        When missing the quadrants split the bounding box of the source points.

    Returns
    -------
    h : Homography
        Least squares fit on the final inlier set.
    inliers : ndarray of int
        Indexes of the matches within ``cfg.inlier_threshold`` of `h`.

    Raises
    ------
    DegenerateConfigurationError
        With fewer than 4 matches.
    NoConsensusError
        If the best hypothesis is supported by less than ``cfg.min_inlier_fraction``
        of the matches.

    Notes
    -----
    Each hypothesis takes one match from each quadrant. If some quadrant holds
    no match, sampling falls back to 4 matches drawn uniformly without replacement.
    The results only depend on ``cfg.rng_seed`` and the inputs.
    """
    if cfg is None:
        cfg = RansacConfig.from_rcparams()
    src, dst = _as_arrays(matches)
    n_matches = len(src)
    if n_matches < 4:
        raise DegenerateConfigurationError(
            f"At least 4 correspondences are needed, got {n_matches}"
        )
    rng = np.random.default_rng(cfg.rng_seed)
    buckets = _quadrant_buckets(src, image_size)
    if buckets is None:
        _log.warning("Empty quadrant among %d matches, sampling uniformly", n_matches)

    threshold = cfg.inlier_threshold
    best_h = None
    best_mask = None
    best_count = 0
    best_residual = np.inf
    n_iterations = cfg.max_iterations
    iteration = 0
    while iteration < n_iterations:
        iteration += 1
        if buckets is None:
            sample = rng.choice(n_matches, size=4, replace=False)
        else:
            sample = np.array([bucket[rng.integers(len(bucket))] for bucket in buckets])
        try:
            hypothesis = _dlt(src[sample], dst[sample])
        except DegenerateConfigurationError:
            continue
        errors = _errors(hypothesis.m, src, dst)
        mask = errors <= threshold
        count = int(mask.sum())
        if count < 4:
            continue
        residual = float(errors[mask].sum())
        if count > best_count or (count == best_count and residual < best_residual):
            best_h, best_mask, best_count, best_residual = hypothesis, mask, count, residual
            n_iterations = max(
                iteration,
                _required_iterations(count / n_matches, cfg.confidence, cfg.max_iterations),
            )

    if best_h is None or best_count / n_matches < cfg.min_inlier_fraction:
        raise NoConsensusError(
            f"Best hypothesis has {best_count} inliers out of {n_matches} matches, "
            f"below the minimum fraction {cfg.min_inlier_fraction}"
        )

    h, mask = best_h, best_mask
    for _ in range(_MAX_REFINEMENTS):
        try:
            refined = _dlt(src[mask], dst[mask])
        except DegenerateConfigurationError:
            break
        new_mask = _errors(refined.m, src, dst) <= threshold
        if new_mask.sum() < 4:
            break
        h = refined
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask

    inliers = np.flatnonzero(_errors(h.m, src, dst) <= threshold)
    if len(inliers) / n_matches < cfg.min_inlier_fraction:
        raise NoConsensusError(
            f"Refined homography keeps {len(inliers)} inliers out of {n_matches} matches"
        )
    _log.debug(
        "RANSAC used %d hypotheses, %d/%d inliers", iteration, len(inliers), n_matches
    )
    return h, inliers


def matches_from_arrays(src, dst):
    """Build a list of :class:`PointMatch` from two arrays of shape (n, 2)."""
    return [
        PointMatch(Point2(float(sx), float(sy)), Point2(float(dx), float(dy)))
        for (sx, sy), (dx, dy) in zip(np.asarray(src), np.asarray(dst))
    ]
