"""Seeded generators of test inputs."""

import numpy as np

from pts_track.geometry import Homography, project_points
from pts_track.pipeline import TrackOutput, TrackRecord, TrackStatus
from pts_track.synth import value_noise
from pts_track.types import BinaryMask, Point2, RotatedBox


def planted_homography(seed=0, max_translation=20.0, max_angle=10.0, image_size=(320, 240)):
    """Generate a rotation about the image center followed by a translation."""
    rng = np.random.default_rng(seed)
    angle = np.deg2rad(rng.uniform(-max_angle, max_angle))
    tx, ty = rng.uniform(-max_translation, max_translation, size=2)
    cx, cy = image_size[0] / 2, image_size[1] / 2
    cos, sin = np.cos(angle), np.sin(angle)
    return Homography(
        [
            [cos, -sin, cx - cos * cx + sin * cy + tx],
            [sin, cos, cy - sin * cx - cos * cy + ty],
            [0.0, 0.0, 1.0],
        ]
    )


def planted_matches(h, n=200, outlier_fraction=0.0, noise=0.0, image_size=(320, 240), seed=0):
    """Generate correspondences consistent with `h`.

    Returns
    -------
    matches : ndarray of shape (n, 4)
        ``sx, sy, dx, dy`` rows.
    inliers : ndarray of bool, shape (n,)
        Rows that were not replaced by outliers.
    """
    rng = np.random.default_rng(seed)
    size = np.asarray(image_size, dtype=float)
    src = rng.random((n, 2)) * size
    dst = project_points(h, src)
    if noise:
        dst = dst + rng.normal(0.0, noise, size=dst.shape)
    inliers = np.ones(n, dtype=bool)
    n_outliers = int(round(outlier_fraction * n))
    if n_outliers:
        idx = rng.choice(n, size=n_outliers, replace=False)
        dst[idx] = rng.random((n_outliers, 2)) * size
        inliers[idx] = False
    return np.hstack((src, dst)), inliers


def textured_image(shape=(120, 160), seed=0, cell=4):
    """Generate a smooth random image with intensities in [0.1, 0.9]."""
    return value_noise(shape, seed, cell=cell)


def random_record(n_frames=30, seed=0, box_size=20.0):
    """Generate a random track record and matching ground truth boxes.

    Statuses mix tracked, initialization, failed and reinitializing frames so
    that every branch of the evaluation is exercised.

    Returns
    -------
    record : TrackRecord
    gt_boxes : list of RotatedBox
    """
    rng = np.random.default_rng(seed)
    centers = 100 + np.cumsum(rng.normal(0, 3, size=(n_frames, 2)), axis=0)
    half = box_size / 2
    gt_boxes = [RotatedBox.from_xywh(x - half, y - half, box_size, box_size) for x, y in centers]
    record = TrackRecord()
    for t in range(n_frames):
        draw = rng.random()
        pred = centers[t] + rng.normal(0, 2, size=2)
        velocity = rng.normal(0, 3, size=2)
        if t == 0 or draw < 0.1:
            status, initialized = TrackStatus.TRACKED, True
        elif draw < 0.2:
            status, initialized = TrackStatus.FAILED, False
        elif draw < 0.3:
            status, initialized = TrackStatus.REINITIALIZING, False
        else:
            status, initialized = TrackStatus.TRACKED, False
        if status == TrackStatus.TRACKED:
            shift = rng.normal(0, 4, size=2)
            box = gt_boxes[t].translated(*shift)
            corner = np.floor(np.asarray(box.center) - 2)
            mask = BinaryMask(np.ones((4, 4), dtype=bool), Point2(*corner))
            score = float(rng.uniform(0.3, 1.0))
        else:
            box = RotatedBox(np.tile(pred, (4, 1)))
            mask = BinaryMask.empty()
            score = 0.0
        if status == TrackStatus.FAILED:
            record.failure_count += 1
        if initialized and t > 0:
            record.reinit_events.append(t)
        record.outputs.append(
            TrackOutput(t, Point2(*pred), velocity, box, mask, score, status, initialized)
        )
    return record, gt_boxes
