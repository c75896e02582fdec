"""Prediction, tracking and segmentation loop.

For every frame the camera motion relative to the reference frame is estimated
from point correspondences, the object state is predicted with the Kalman
filter, an adaptive search region is cropped around the projected prediction,
the matcher segments the object and the center of the mask corrects the state.
:func:`run_sequence` adds the reinitialization protocol used for evaluation.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from pts_track.base import dict_to_dataset
from pts_track.errors import (
    BoxOutOfBoundsError,
    DegenerateConfigurationError,
    EmptyMaskError,
    GeometryError,
    NoConsensusError,
    NotInitializedError,
    SingularInnovationError,
    TemplateLargerThanPatchError,
    ZeroVarianceTemplateError,
)
from pts_track.geometry import (
    Homography,
    RansacConfig,
    apply_homography,
    compose_homographies,
    invert_homography,
    ransac_homography,
)
from pts_track.matcher import MatcherConfig, get_matcher, rescale_template
from pts_track.metrics import overlap, rasterize
from pts_track.motion import (
    KalmanConfig,
    ReferenceContext,
    advance_reference,
    bootstrap_velocity,
    center_of_mass,
    init_state,
    kalman_correct,
    kalman_predict,
)
from pts_track.rcparams import rcParams
from pts_track.region import RegionConfig, build_search_region, extract_patch
from pts_track.types import BinaryMask, Point2, RotatedBox
from pts_track.validate import validate_aligned, validate_image

__all__ = [
    "TrackerConfig",
    "TrackStatus",
    "TrackOutput",
    "TrackRecord",
    "Session",
    "init",
    "step",
    "run_sequence",
    "replay_results",
]

_log = logging.getLogger(__name__)

_GEOMETRY_MODES = ("pts", "pts-no-region")
_RECOVERABLE = (
    GeometryError,
    EmptyMaskError,
    SingularInnovationError,
    TemplateLargerThanPatchError,
    ZeroVarianceTemplateError,
)
_RASTER_OFFSET = 1e-7


class TrackStatus(StrEnum):
    """Outcome of a frame."""

    TRACKED = "tracked"
    FAILED = "failed"
    REINITIALIZING = "reinitializing"


@dataclass(frozen=True)
class TrackerConfig:
    """Configuration of the tracking loop.

    Attributes
    ----------
    n : int, default 10
        Reference interval in frames.
    reinit_gap : int, default 5
        Frames skipped after a failure before reinitializing.
    mode : {"pts", "pts-no-region", "pts-no-prediction", "baseline"}
        ``pts-no-region`` fixes the region scale factor, ``pts-no-prediction``
        ignores camera motion and centers the search on the last measured
        position, ``baseline`` also fixes the scale factor.
    match_pairing : {"previous", "reference"}
        Whether the correspondences of a frame start from the previous frame or
        from the current reference frame.
    region, kalman, ransac, matcher : config dataclasses
    matcher_key : str, default "ncc"
    fixed_scale : float, default 2.0
        Region scale factor of the ``baseline`` and ``pts-no-region`` modes.
    """

    n: int = 10
    reinit_gap: int = 5
    mode: str = "pts"
    match_pairing: str = "previous"
    region: RegionConfig = field(default_factory=RegionConfig)
    kalman: KalmanConfig = field(default_factory=KalmanConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    matcher_key: str = "ncc"
    fixed_scale: float = 2.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Reference interval n must be at least 1, got {self.n}")
        if self.reinit_gap < 0:
            raise ValueError(f"reinit_gap must be non negative, got {self.reinit_gap}")
        if self.mode not in ("pts", "pts-no-region", "pts-no-prediction", "baseline"):
            raise ValueError(f"Unknown tracker mode {self.mode!r}")
        if self.match_pairing not in ("previous", "reference"):
            raise ValueError(f"Unknown match pairing {self.match_pairing!r}")

    @classmethod
    def from_rcparams(cls, **overrides):
        """Create the configuration from the current rcParams.

        Keyword arguments override the resulting fields.
        """
        tracker = rcParams.section("tracker")
        kwargs = {
            "n": tracker["n"],
            "reinit_gap": tracker["reinit_gap"],
            "mode": tracker["mode"],
            "match_pairing": tracker["match_pairing"],
            "region": RegionConfig.from_rcparams(),
            "kalman": KalmanConfig.from_rcparams(),
            "ransac": RansacConfig.from_rcparams(),
            "matcher": MatcherConfig.from_rcparams(),
            "matcher_key": rcParams["matcher.key"],
            "fixed_scale": rcParams["region.fixed_scale"],
        }
        kwargs.update(overrides)
        return cls(**kwargs)

    def with_mode(self, mode):
        """Return a copy running in another mode."""
        return dataclasses.replace(self, mode=mode)


@dataclass(frozen=True, eq=False)
class TrackOutput:
    """Result of one frame.

    Attributes
    ----------
    frame_index : int
    predicted_center : Point2
        Prior center projected in the frame, computed before looking at it.
    predicted_velocity : ndarray of shape (2,)
        Prior velocity expressed in the frame.
    box : RotatedBox
        Frame coordinates. Failed and reinitializing frames get a zero area box.
    mask : BinaryMask
        Frame coordinates. Empty unless the frame is tracked.
    score : float
    status : TrackStatus
    initialized : bool
        Whether the tracker was (re)initialized from ground truth at this frame.
    """

    frame_index: int
    predicted_center: Point2
    predicted_velocity: np.ndarray
    box: RotatedBox
    mask: BinaryMask
    score: float
    status: TrackStatus
    initialized: bool = False

    def __post_init__(self):
        if self.status == TrackStatus.TRACKED and self.mask.is_empty:
            raise ValueError("Tracked frames need a non empty mask")


@dataclass
class TrackRecord:
    """Per-frame outputs of a whole sequence.

    Attributes
    ----------
    outputs : list of TrackOutput
    failure_count : int
    reinit_events : list of int
        Frames at which the tracker was reinitialized from ground truth.
    """

    outputs: list[TrackOutput] = field(default_factory=list)
    failure_count: int = 0
    reinit_events: list[int] = field(default_factory=list)

    def __len__(self):
        """Number of frames."""
        return len(self.outputs)

    @property
    def statuses(self):
        """Status of every frame."""
        return [out.status for out in self.outputs]

    @property
    def boxes(self):
        """Box of every frame."""
        return [out.box for out in self.outputs]

    def to_dataset(self, attrs=None):
        """Convert the record to a :class:`xarray.Dataset`.

        Returns
        -------
        Dataset
            Variables ``predicted_center``, ``predicted_velocity``, ``box``, ``score``,
            ``status`` and ``initialized`` over the ``frame`` dimension.
        """
        frames = np.array([out.frame_index for out in self.outputs], dtype=int)
        data = {
            "predicted_center": np.array(
                [tuple(out.predicted_center) for out in self.outputs], dtype=float
            ).reshape(-1, 2),
            "predicted_velocity": np.array(
                [out.predicted_velocity for out in self.outputs], dtype=float
            ).reshape(-1, 2),
            "box": np.array([out.box.corners for out in self.outputs], dtype=float).reshape(
                -1, 4, 2
            ),
            "score": np.array([out.score for out in self.outputs], dtype=float),
            "status": np.array([str(out.status) for out in self.outputs], dtype=str),
            "initialized": np.array([out.initialized for out in self.outputs], dtype=bool),
        }
        dims = {
            "predicted_center": ["frame", "xy"],
            "predicted_velocity": ["frame", "xy"],
            "box": ["frame", "corner", "xy"],
            "score": ["frame"],
            "status": ["frame"],
            "initialized": ["frame"],
        }
        record_attrs = {
            "failure_count": self.failure_count,
            "reinit_events": list(self.reinit_events),
        }
        if attrs is not None:
            record_attrs.update(attrs)
        return dict_to_dataset(data, dims=dims, coords={"frame": frames}, attrs=record_attrs)


def _template_window(frame, box):
    """Pixel bounds of the template covered by the hull of `box`.

    Returns ``(r0, r1, c0, c1)`` inclusive.
    """
    height, width = frame.shape
    xmin, ymin, xmax, ymax = box.bounds()
    if box.area <= 0 or xmax <= xmin or ymax <= ymin:
        raise BoxOutOfBoundsError("Initialization box has zero area")
    c0 = max(int(np.ceil(xmin - _RASTER_OFFSET)), 0)
    c1 = min(int(np.floor(xmax - _RASTER_OFFSET)), width - 1)
    r0 = max(int(np.ceil(ymin - _RASTER_OFFSET)), 0)
    r1 = min(int(np.floor(ymax - _RASTER_OFFSET)), height - 1)
    if c1 < c0 or r1 < r0:
        raise BoxOutOfBoundsError(
            f"Initialization box {box.bounds()} does not cover any pixel of a "
            f"{width}x{height} frame"
        )
    return r0, r1, c0, c1


def _zero_box(point):
    x, y = (0.0, 0.0) if not np.all(np.isfinite(point)) else (point[0], point[1])
    return RotatedBox(np.tile([x, y], (4, 1)))


class Session:
    """Tracking state machine for a single object.

    Sessions are created with :func:`init` and advanced with :meth:`step`.

    Parameters
    ----------
    cfg : TrackerConfig, optional
    matcher : Matcher, optional
        Defaults to the matcher registered under ``cfg.matcher_key``.
    """

    def __init__(self, cfg=None, matcher=None):
        self.cfg = TrackerConfig.from_rcparams() if cfg is None else cfg
        if matcher is None:
            matcher = get_matcher(self.cfg.matcher_key, self.cfg.matcher)
        self.matcher = matcher
        self.template = None
        self.anchor_offset = np.zeros(2)
        self.state = None
        self.reference = None
        self.frame_index = None
        self.last_position = None
        self.last_displacement = np.zeros(2)
        self._bootstrap = None

    @property
    def initialized(self):
        """Whether :meth:`initialize` has been called."""
        return self.template is not None

    @property
    def object_size(self):
        """Width and height of the template in pixels."""
        height, width = self.template.shape
        return width, height

    def __repr__(self):
        """Summarize the session."""
        if not self.initialized:
            return f"Session(mode={self.cfg.mode!r}, uninitialized)"
        return (
            f"Session(mode={self.cfg.mode!r}, frame={self.frame_index}, "
            f"position={self.state.position}, reference={self.reference.ref_index})"
        )

    def initialize(self, frame, init_box, frame_index=0):
        """(Re)initialize the session from a box on `frame`.

        Raises
        ------
        BoxOutOfBoundsError
        ZeroVarianceTemplateError
        """
        frame = validate_image(frame, "frame")
        r0, r1, c0, c1 = _template_window(frame, init_box)
        template = frame[r0 : r1 + 1, c0 : c1 + 1].copy()
        if np.ptp(template) == 0:
            raise ZeroVarianceTemplateError("Initialization box covers a constant region")
        center = init_box.center
        self.template = template
        self.anchor_offset = np.array([center.x - (c0 + c1) / 2, center.y - (r0 + r1) / 2])
        self.state = init_state(center, self.cfg.kalman, frame_index)
        self.reference = ReferenceContext(frame_index, self.cfg.n)
        self.frame_index = frame_index
        self.last_position = np.array(center, dtype=float)
        self.last_displacement = np.zeros(2)
        self._bootstrap = (np.array(center, dtype=float), frame_index)
        _log.debug("Session initialized at frame %d, center %s", frame_index, center)
        return self

    def _estimate_homography(self, matches, frame_shape):
        """Map from the reference frame to the pending frame."""
        h_last = self.reference.h_ref_to_pending
        if matches is None or len(matches) == 0:
            _log.debug("No correspondences for frame %d", self.frame_index + 1)
            h_step = Homography.identity()
        else:
            height, width = frame_shape
            try:
                h_step, _ = ransac_homography(matches, self.cfg.ransac, (width, height))
            except (NoConsensusError, DegenerateConfigurationError) as err:
                _log.warning(
                    "Homography estimation failed at frame %d (%s), using identity",
                    self.frame_index + 1,
                    err,
                )
                h_step = Homography.identity()
                if self.cfg.match_pairing == "reference":
                    h_step = h_last
        if self.cfg.match_pairing == "previous":
            return compose_homographies(h_step, h_last)
        return h_step

    def _region_config(self):
        if self.cfg.mode in ("baseline", "pts-no-region"):
            return dataclasses.replace(self.cfg.region, fixed_scale=self.cfg.fixed_scale)
        return self.cfg.region

    def step(self, frame, matches=None):
        """Track the object in the next frame.

        Parameters
        ----------
        frame : Image
        matches : sequence of PointMatch or ndarray of shape (n, 4), optional
            Correspondences from the previous frame (or from the reference frame,
            depending on ``cfg.match_pairing``) to `frame`.

        Returns
        -------
        TrackOutput

        Raises
        ------
        NotInitializedError
        """
        if not self.initialized:
            raise NotInitializedError("Session.step called before initialization")
        frame = validate_image(frame, "frame")
        cfg = self.cfg
        pending = self.frame_index + 1
        use_geometry = cfg.mode in _GEOMETRY_MODES

        if use_geometry:
            h_ref = self._estimate_homography(matches, frame.shape)
            prior = kalman_predict(self.state, cfg.kalman)
        else:
            h_ref = Homography.identity()
            prior = None

        status = TrackStatus.FAILED
        score = 0.0
        mask = BinaryMask.empty()
        predicted_center = Point2(np.nan, np.nan)
        predicted_velocity = np.full(2, np.nan)
        box = None
        measurement = None
        try:
            if use_geometry:
                center_ref, velocity = prior.position, prior.velocity
            else:
                center_ref = Point2(*self.last_position)
                velocity = (
                    self.last_displacement.copy()
                    if cfg.mode == "pts-no-prediction"
                    else np.zeros(2)
                )
            predicted_center = apply_homography(h_ref, center_ref)
            moved = Point2(center_ref[0] + velocity[0], center_ref[1] + velocity[1])
            predicted_velocity = np.asarray(apply_homography(h_ref, moved)) - predicted_center
            width, height = self.object_size
            region = build_search_region(
                center_ref, h_ref, width, height, velocity, self._region_config()
            )
            patch = extract_patch(frame, region, cfg.region.pad_value)
            template = rescale_template(self.template, region.scale)
            result = self.matcher.match(template, patch.pixels)
            score = result.score
            frame_mask = patch.mask_to_frame(result.mask)
            if not result.mask.is_empty and score >= cfg.matcher.failure_threshold:
                if not frame_mask.is_empty:
                    com = patch.point_to_frame(center_of_mass(result.mask))
                    # rescaled template grid stops short of the last template pixel
                    grid_shift = (
                        np.array([width - 1, height - 1])
                        - (np.array(template.shape[::-1]) - 1) * region.scale
                    ) / 2
                    measurement = np.asarray(com) + self.anchor_offset + grid_shift
                    mask = frame_mask
                    box = patch.box_to_frame(result.box)
                    status = TrackStatus.TRACKED
        except _RECOVERABLE as err:
            _log.info("Frame %d degraded to failed: %s", pending, err)
            status = TrackStatus.FAILED

        if status == TrackStatus.TRACKED:
            try:
                self._update(prior, h_ref, measurement, pending)
            except _RECOVERABLE as err:
                _log.info("Frame %d degraded to failed: %s", pending, err)
                status = TrackStatus.FAILED
                mask = BinaryMask.empty()
        if status != TrackStatus.TRACKED:
            if use_geometry:
                self.state = prior
            box = _zero_box(predicted_center)

        if use_geometry:
            self.reference = dataclasses.replace(self.reference, h_ref_to_pending=h_ref)
            self._maybe_advance_reference(pending)
        self.frame_index = pending
        return TrackOutput(
            frame_index=pending,
            predicted_center=Point2(float(predicted_center[0]), float(predicted_center[1])),
            predicted_velocity=np.asarray(predicted_velocity, dtype=float),
            box=box,
            mask=mask,
            score=float(score),
            status=status,
        )

    def _update(self, prior, h_ref, measurement, pending):
        """Correct the state with a measurement in frame coordinates."""
        if self.cfg.mode not in _GEOMETRY_MODES:
            self.last_displacement = measurement - self.last_position
            self.last_position = measurement
            return
        z_ref = apply_homography(invert_homography(h_ref), measurement)
        posterior = kalman_correct(prior, z_ref, self.cfg.kalman)
        if self._bootstrap is not None:
            start, start_index = self._bootstrap
            velocity = bootstrap_velocity(start, z_ref) / (pending - start_index)
            posterior = posterior.with_velocity(velocity)
            self._bootstrap = None
        self.state = posterior
        self.last_position = np.asarray(measurement, dtype=float)

    def _maybe_advance_reference(self, pending):
        if not self.reference.is_due(pending):
            return
        h_old_to_new = self.reference.h_ref_to_pending
        self.state = advance_reference(self.state, h_old_to_new)
        if self._bootstrap is not None:
            start, start_index = self._bootstrap
            self._bootstrap = (np.asarray(apply_homography(h_old_to_new, start)), start_index)
        self.reference = ReferenceContext(pending, self.cfg.n)
        _log.debug("Reference frame advanced to %d", pending)


def init(frame, init_box, cfg=None, frame_index=0, matcher=None):
    """Start tracking the object inside `init_box`.

    Parameters
    ----------
    frame : Image
    init_box : RotatedBox
    cfg : TrackerConfig, optional
    frame_index : int, default 0
    matcher : Matcher, optional

    Returns
    -------
    Session
        The template is the pixels of the axis aligned hull of the box, the state
        is centered on the box with zero velocity and the frame becomes the
        reference frame.

    Raises
    ------
    BoxOutOfBoundsError
        If the box has zero area or does not cover any pixel of the frame.
    """
    return Session(cfg, matcher).initialize(frame, init_box, frame_index)


def step(session, frame, matches=None):
    """Advance `session` by one frame, see :meth:`Session.step`."""
    if session is None:
        raise NotInitializedError("Tracking session has not been initialized")
    return session.step(frame, matches)


def _init_output(frame_index, box):
    return TrackOutput(
        frame_index=frame_index,
        predicted_center=box.center,
        predicted_velocity=np.zeros(2),
        box=box,
        mask=rasterize(box),
        score=1.0,
        status=TrackStatus.TRACKED,
        initialized=True,
    )


def _skipped_output(frame_index):
    return TrackOutput(
        frame_index=frame_index,
        predicted_center=Point2(np.nan, np.nan),
        predicted_velocity=np.full(2, np.nan),
        box=_zero_box((0.0, 0.0)),
        mask=BinaryMask.empty(),
        score=0.0,
        status=TrackStatus.REINITIALIZING,
    )


def run_sequence(frames, gt, matches=None, cfg=None, matcher=None):
    """Track a whole sequence with the reinitialization protocol.

    A frame whose mask does not overlap the ground truth box is a failure. The
    following ``cfg.reinit_gap`` frames are skipped and the tracker is then
    reinitialized from the ground truth.

    Parameters
    ----------
    frames : sequence of Image
    gt : sequence of RotatedBox
    matches : sequence of (sequence of PointMatch or None), optional
        Correspondences of each frame, the entry of frame 0 is ignored.
    cfg : TrackerConfig, optional
    matcher : Matcher, optional

    Returns
    -------
    TrackRecord

    Raises
    ------
    LengthMismatchError
    """
    if cfg is None:
        cfg = TrackerConfig.from_rcparams()
    n_frames = validate_aligned(frames=frames, gt=gt, matches=matches)
    if matches is None:
        matches = [None] * n_frames
    record = TrackRecord()
    session = Session(cfg, matcher)
    next_init = 0
    for t in range(n_frames):
        if t < next_init:
            record.outputs.append(_skipped_output(t))
            continue
        if t == next_init:
            try:
                session.initialize(frames[t], gt[t], frame_index=t)
            except (BoxOutOfBoundsError, ZeroVarianceTemplateError) as err:
                _log.warning("Cannot initialize at frame %d: %s", t, err)
                record.outputs.append(_skipped_output(t))
                next_init = t + 1
                continue
            if t > 0:
                record.reinit_events.append(t)
                _log.debug("Reinitialized from ground truth at frame %d", t)
            record.outputs.append(_init_output(t, gt[t]))
            continue
        output = session.step(frames[t], matches[t])
        if output.status != TrackStatus.TRACKED or overlap(output.mask, gt[t]) == 0:
            record.failure_count += 1
            next_init = t + cfg.reinit_gap + 1
            _log.debug("Failure at frame %d, reinitializing at %d", t, next_init)
            output = dataclasses.replace(
                output,
                status=TrackStatus.FAILED,
                mask=BinaryMask.empty(),
                box=_zero_box(output.predicted_center),
            )
        record.outputs.append(output)
    return record


def replay_results(boxes, gt, reinit_gap=None, predictions=None):
    """Rebuild a :class:`TrackRecord` from stored results.

    Parameters
    ----------
    boxes : sequence of RotatedBox
        One reported box per frame.
    gt : sequence of RotatedBox
    reinit_gap : int, optional
        Defaults to ``rcParams["tracker.reinit_gap"]``. Only used without
        `predictions`.
    predictions : Dataset, optional
        Output of :func:`pts_track.data.read_predictions`. When given, statuses
        and predicted states are taken from it; otherwise the reinitialization
        protocol is replayed on the boxes (zero overlap is a failure) and the box
        centers stand in for the predictions.

    Returns
    -------
    TrackRecord

    Raises
    ------
    LengthMismatchError
    """
    if reinit_gap is None:
        reinit_gap = rcParams["tracker.reinit_gap"]
    boxes, gt = list(boxes), list(gt)
    n_frames = validate_aligned(
        boxes=boxes,
        gt=gt,
        predictions=None if predictions is None else predictions["frame"].values,
    )
    record = TrackRecord()
    if predictions is not None:
        statuses = predictions["status"].values
        centers = predictions["predicted_center"].values
        velocities = predictions["predicted_velocity"].values
        scores = predictions["score"].values
        for t in range(n_frames):
            initialized = statuses[t] == "init"
            status = TrackStatus.TRACKED if initialized else TrackStatus(statuses[t])
            mask = rasterize(boxes[t]) if status == TrackStatus.TRACKED else BinaryMask.empty()
            if status == TrackStatus.TRACKED and mask.is_empty:
                mask = BinaryMask(np.ones((1, 1), dtype=bool), Point2(*np.round(boxes[t].center)))
            record.outputs.append(
                TrackOutput(
                    t,
                    Point2(*centers[t]),
                    velocities[t],
                    boxes[t],
                    mask,
                    float(scores[t]),
                    status,
                    initialized,
                )
            )
            if status == TrackStatus.FAILED:
                record.failure_count += 1
            if initialized and t > 0:
                record.reinit_events.append(t)
        return record

    next_init = 0
    previous_center = None
    for t in range(n_frames):
        if t < next_init:
            record.outputs.append(_skipped_output(t))
            previous_center = None
            continue
        if t == next_init:
            if t > 0:
                record.reinit_events.append(t)
            record.outputs.append(_init_output(t, gt[t]))
            previous_center = np.asarray(gt[t].center)
            continue
        center = np.asarray(boxes[t].center)
        velocity = center - previous_center if previous_center is not None else np.zeros(2)
        mask = rasterize(boxes[t])
        if mask.is_empty or overlap(mask, gt[t]) == 0:
            record.failure_count += 1
            next_init = t + reinit_gap + 1
            output = TrackOutput(
                t, Point2(*center), velocity, boxes[t], BinaryMask.empty(), 0.0, TrackStatus.FAILED
            )
        else:
            output = TrackOutput(
                t, Point2(*center), velocity, boxes[t], mask, 1.0, TrackStatus.TRACKED
            )
        previous_center = center
        record.outputs.append(output)
    return record
