# pylint: disable=wrong-import-position
"""Single object tracking with camera motion compensated state prediction."""

import logging

_log = logging.getLogger(__name__)

from pts_track._version import __version__
from pts_track.base import dict_to_dataset, generate_dims_coords, make_attrs
from pts_track.data import (
    load_config,
    load_image,
    load_matches,
    load_sequence,
    load_truth,
    read_predictions,
    read_vot_file,
    render_overlay,
    save_image,
    save_truth,
    write_matches,
    write_predictions,
    write_vot_file,
)
from pts_track.errors import *  # noqa: F403
from pts_track.errors import __all__ as _errors_all
from pts_track.geometry import (
    Homography,
    RansacConfig,
    apply_homography,
    compose_homographies,
    estimate_homography,
    homography_jacobian,
    invert_homography,
    project_points,
    ransac_homography,
)
from pts_track.matcher import (
    MatcherConfig,
    NCCMatcher,
    get_matcher,
    list_matchers,
    register_matcher,
)
from pts_track.metrics import (
    SummaryReport,
    VelocityErrors,
    overlap,
    position_error,
    position_error_by_speed,
    summarize,
    velocity_errors,
)
from pts_track.motion import (
    KalmanConfig,
    MotionState,
    ReferenceContext,
    advance_reference,
    kalman_correct,
    kalman_predict,
)
from pts_track.pipeline import (
    Session,
    TrackerConfig,
    TrackOutput,
    TrackRecord,
    TrackStatus,
    init,
    replay_results,
    run_sequence,
    step,
)
from pts_track.rcparams import rc_context, rcParams
from pts_track.region import RegionConfig, SearchRegion, adaptive_scale, extract_patch
from pts_track.synth import ScenarioSpec, generate, render_sequence, standard_suite
from pts_track.types import BinaryMask, Point2, PointMatch, RotatedBox
from pts_track import testing

__all__ = [
    "__version__",
    # base
    "dict_to_dataset",
    "generate_dims_coords",
    "make_attrs",
    # types
    "BinaryMask",
    "Point2",
    "PointMatch",
    "RotatedBox",
    # geometry
    "Homography",
    "RansacConfig",
    "apply_homography",
    "compose_homographies",
    "estimate_homography",
    "homography_jacobian",
    "invert_homography",
    "project_points",
    "ransac_homography",
    # motion
    "KalmanConfig",
    "MotionState",
    "ReferenceContext",
    "advance_reference",
    "kalman_correct",
    "kalman_predict",
    # region
    "RegionConfig",
    "SearchRegion",
    "adaptive_scale",
    "extract_patch",
    # matcher
    "MatcherConfig",
    "NCCMatcher",
    "get_matcher",
    "list_matchers",
    "register_matcher",
    # pipeline
    "Session",
    "TrackerConfig",
    "TrackOutput",
    "TrackRecord",
    "TrackStatus",
    "init",
    "replay_results",
    "run_sequence",
    "step",
    # data
    "load_config",
    "load_image",
    "load_matches",
    "load_sequence",
    "load_truth",
    "read_predictions",
    "read_vot_file",
    "render_overlay",
    "save_image",
    "save_truth",
    "write_matches",
    "write_predictions",
    "write_vot_file",
    # metrics
    "SummaryReport",
    "VelocityErrors",
    "overlap",
    "position_error",
    "position_error_by_speed",
    "summarize",
    "velocity_errors",
    # synth
    "ScenarioSpec",
    "generate",
    "render_sequence",
    "standard_suite",
    # rcparams
    "rc_context",
    "rcParams",
    "testing",
    *_errors_all,
]
