"""Evaluation measures: prediction errors, overlap and accuracy/robustness."""

import json
from dataclasses import asdict, dataclass

import numpy as np
import xarray as xr

from pts_track.types import BinaryMask, Point2, RotatedBox
from pts_track.validate import validate_aligned

__all__ = [
    "VelocityErrors",
    "SummaryReport",
    "position_error",
    "velocity_errors",
    "rasterize",
    "overlap",
    "gt_velocities",
    "summarize",
    "position_error_by_speed",
]

_NORM_EPS = 1e-12
# pixel centers are sampled slightly off the grid so that boxes behave as half open sets
_RASTER_OFFSET = 1e-7


@dataclass(frozen=True)
class VelocityErrors:
    """Velocity prediction errors.

    Attributes
    ----------
    euclidean : float
        Norm of the velocity difference, px/frame.
    cosine : float
        Cosine of the angle between both velocities, 0 when one is null.
    magnitude : float
        Absolute difference of the speeds, px/frame.
    """

    euclidean: float
    cosine: float
    magnitude: float


@dataclass(frozen=True)
class SummaryReport:
    """Aggregated evaluation of a tracked sequence.

    Attributes
    ----------
    position_error : float
        Mean distance between predicted and true centers.
    velocity : VelocityErrors
        Mean of each velocity error.
    accuracy : float
        Mean box overlap on tracked frames, in [0, 1].
    failure_count : int
    robustness : float
        Failures per 100 frames.
    n_frames : int
    n_evaluated : int
        Number of frames entering the prediction errors.
    """

    position_error: float
    velocity: VelocityErrors
    accuracy: float
    failure_count: int
    robustness: float
    n_frames: int
    n_evaluated: int

    def to_dict(self):
        """Convert to a dict of plain python values."""
        return asdict(self)

    def to_json(self, **kwargs):
        """Serialize to a JSON string, non finite values become ``null``."""

        def _clean(obj):
            if isinstance(obj, dict):
                return {key: _clean(value) for key, value in obj.items()}
            if isinstance(obj, float) and not np.isfinite(obj):
                return None
            return obj

        return json.dumps(_clean(self.to_dict()), **kwargs)


def position_error(pred, gt):
    """Euclidean distance between predicted and true positions."""
    return float(np.hypot(pred[0] - gt[0], pred[1] - gt[1]))


def velocity_errors(pred_v, gt_v):
    """Compare a predicted velocity with the true one.

    Examples
    --------
    .. code-block:: python

        velocity_errors((3, 4), (6, 8))
        # VelocityErrors(euclidean=5.0, cosine=1.0, magnitude=5.0)
    """
    pred_v = np.asarray(pred_v, dtype=float)
    gt_v = np.asarray(gt_v, dtype=float)
    pred_norm = float(np.hypot(*pred_v))
    gt_norm = float(np.hypot(*gt_v))
    if pred_norm < _NORM_EPS or gt_norm < _NORM_EPS:
        cosine = 0.0
    else:
        cosine = float(np.clip(np.dot(pred_v, gt_v) / (pred_norm * gt_norm), -1.0, 1.0))
    return VelocityErrors(
        euclidean=float(np.hypot(*(pred_v - gt_v))),
        cosine=cosine,
        magnitude=abs(pred_norm - gt_norm),
    )


def rasterize(shape):
    """Pixels covered by a mask or box on the frame pixel grid.

    Box pixels are those whose center lies inside the quadrilateral, with the
    right and bottom edges excluded.

    Parameters
    ----------
    shape : BinaryMask or RotatedBox

    Returns
    -------
    BinaryMask
        Anchored at an integer pixel.
    """
    if isinstance(shape, BinaryMask):
        return BinaryMask(shape.bits, Point2(round(shape.origin.x), round(shape.origin.y)))
    if not isinstance(shape, RotatedBox):
        raise TypeError(f"Cannot rasterize object of type {type(shape).__name__}")
    xmin, ymin, xmax, ymax = shape.bounds()
    cols = np.arange(np.floor(xmin), np.ceil(xmax) + 1)
    rows = np.arange(np.floor(ymin), np.ceil(ymax) + 1)
    grid_x, grid_y = np.meshgrid(cols, rows)
    points = np.column_stack((grid_x.ravel(), grid_y.ravel())) + _RASTER_OFFSET
    inside = shape.contains(points, tol=0.0).reshape(grid_x.shape)
    return BinaryMask(inside, Point2(float(cols[0]), float(rows[0])))


def _pixel_sets(first, second):
    """Place two rasterized masks on a common canvas."""
    x0 = int(min(first.origin.x, second.origin.x))
    y0 = int(min(first.origin.y, second.origin.y))
    x1 = int(max(first.origin.x + first.width, second.origin.x + second.width))
    y1 = int(max(first.origin.y + first.height, second.origin.y + second.height))
    canvases = []
    for mask in (first, second):
        canvas = np.zeros((y1 - y0, x1 - x0), dtype=bool)
        r0, c0 = int(mask.origin.y) - y0, int(mask.origin.x) - x0
        canvas[r0 : r0 + mask.height, c0 : c0 + mask.width] = mask.bits
        canvases.append(canvas)
    return canvases


def overlap(mask_or_box, gt_box):
    """Intersection over union of two rasterized shapes.

    Parameters
    ----------
    mask_or_box : BinaryMask or RotatedBox
    gt_box : RotatedBox or BinaryMask

    Returns
    -------
    float
        In [0, 1], 0 when both shapes are empty.
    """
    first, second = rasterize(mask_or_box), rasterize(gt_box)
    if first.is_empty or second.is_empty:
        return 0.0
    first_px, second_px = _pixel_sets(first, second)
    union = np.count_nonzero(first_px | second_px)
    return float(np.count_nonzero(first_px & second_px) / union)


def gt_velocities(gt_centers):
    """True velocities as the difference of consecutive true centers.

    The first frame gets a null velocity.

    Returns
    -------
    ndarray of shape (n, 2)
    """
    centers = np.asarray(gt_centers, dtype=float).reshape(-1, 2)
    velocities = np.zeros_like(centers)
    velocities[1:] = np.diff(centers, axis=0)
    return velocities


def _record_dataset(record):
    if isinstance(record, xr.Dataset):
        return record
    return record.to_dataset()


def _evaluated_frames(ds):
    """Frames entering the prediction errors: tracked and not (re)initialized."""
    tracked = ds["status"].values == "tracked"
    return tracked & ~ds["initialized"].values.astype(bool)


def summarize(record, gt_boxes, gt_centers=None):
    """Aggregate the prediction errors and the overlap of a tracked sequence.

    Parameters
    ----------
    record : TrackRecord or Dataset
        Output of :func:`pts_track.pipeline.run_sequence` or its dataset form.
    gt_boxes : sequence of RotatedBox
    gt_centers : array_like of shape (n_frames, 2), optional
        True object centers. Defaults to the centers of `gt_boxes`.

    Returns
    -------
    SummaryReport

    Raises
    ------
    LengthMismatchError

    Notes
    -----
    Only frames with status ``tracked`` that are not initialization frames are
    evaluated; reinitializing and failed frames are left out. The true velocity at
    frame ``t`` is ``gt_center(t) - gt_center(t - 1)``.
    """
    ds = _record_dataset(record)
    gt_boxes = list(gt_boxes)
    if gt_centers is None:
        gt_centers = [box.center for box in gt_boxes]
    n_frames = validate_aligned(
        record=ds["frame"].values, gt_boxes=gt_boxes, gt_centers=list(gt_centers)
    )
    gt_centers = np.asarray(gt_centers, dtype=float).reshape(-1, 2)
    gt_v = gt_velocities(gt_centers)
    evaluated = _evaluated_frames(ds)
    pred_centers = ds["predicted_center"].values
    pred_v = ds["predicted_velocity"].values
    boxes = ds["box"].values

    pos_errors = [position_error(pred_centers[t], gt_centers[t]) for t in np.flatnonzero(evaluated)]
    vel_errors = [velocity_errors(pred_v[t], gt_v[t]) for t in np.flatnonzero(evaluated)]
    overlaps = [overlap(RotatedBox(boxes[t]), gt_boxes[t]) for t in np.flatnonzero(evaluated)]
    n_evaluated = len(pos_errors)

    failure_count = int(ds.attrs.get("failure_count", 0))
    if n_evaluated:
        velocity = VelocityErrors(
            euclidean=float(np.mean([err.euclidean for err in vel_errors])),
            cosine=float(np.mean([err.cosine for err in vel_errors])),
            magnitude=float(np.mean([err.magnitude for err in vel_errors])),
        )
        mean_position_error = float(np.mean(pos_errors))
        accuracy = float(np.mean(overlaps))
    else:
        velocity = VelocityErrors(np.nan, np.nan, np.nan)
        mean_position_error = np.nan
        accuracy = 0.0
    return SummaryReport(
        position_error=mean_position_error,
        velocity=velocity,
        accuracy=accuracy,
        failure_count=failure_count,
        robustness=100 * failure_count / n_frames if n_frames else 0.0,
        n_frames=n_frames,
        n_evaluated=n_evaluated,
    )


def position_error_by_speed(record, gt_boxes, bins=(0, 2, 5, 10, 20, np.inf)):
    """Mean prediction error grouped by true object speed.

    Parameters
    ----------
    record : TrackRecord or Dataset
    gt_boxes : sequence of RotatedBox
    bins : sequence of float
        Increasing speed bin edges in px/frame.

    Returns
    -------
    DataArray
        Mean position error over the ``speed_bin`` dimension, NaN for empty bins,
        with the number of frames per bin as ``count`` coordinate.
    """
    ds = _record_dataset(record)
    gt_boxes = list(gt_boxes)
    validate_aligned(record=ds["frame"].values, gt_boxes=gt_boxes)
    bins = np.asarray(bins, dtype=float)
    if bins.ndim != 1 or len(bins) < 2 or np.any(np.diff(bins) <= 0):
        raise ValueError("Speed bins must be an increasing sequence of at least 2 edges")
    gt_centers = np.array([box.center for box in gt_boxes])
    speeds = np.hypot(*gt_velocities(gt_centers).T)
    errors = np.hypot(*(ds["predicted_center"].values - gt_centers).T)
    evaluated = _evaluated_frames(ds)
    bin_idx = np.digitize(speeds, bins) - 1
    means = np.full(len(bins) - 1, np.nan)
    counts = np.zeros(len(bins) - 1, dtype=int)
    for idx in range(len(bins) - 1):
        selected = evaluated & (bin_idx == idx)
        counts[idx] = np.count_nonzero(selected)
        if counts[idx]:
            means[idx] = errors[selected].mean()
    labels = [f"[{lo:g}, {hi:g})" for lo, hi in zip(bins[:-1], bins[1:])]
    return xr.DataArray(
        means,
        dims=["speed_bin"],
        coords={"speed_bin": labels, "count": ("speed_bin", counts)},
        name="position_error",
    )
