"""Object motion estimation in reference-frame coordinates.

The object state ``[x, y, dx, dy]`` follows a constant velocity model and is
estimated with a linear Kalman filter. Positions are measured as the center of
mass of the segmentation mask. Every ``n`` frames the reference frame changes and
the state is remapped through the homography relating both references.
"""

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from pts_track.errors import EmptyMaskError, SingularInnovationError
from pts_track.geometry import Homography, apply_homography, homography_jacobian
from pts_track.rcparams import rcParams
from pts_track.types import Point2

__all__ = [
    "MotionState",
    "KalmanConfig",
    "ReferenceContext",
    "center_of_mass",
    "kalman_predict",
    "kalman_correct",
    "bootstrap_velocity",
    "advance_reference",
    "init_state",
]

_log = logging.getLogger(__name__)

_SYM_TOL = 1e-9
_MAX_INNOVATION_COND = 1e15


def _symmetrize(mat):
    return (mat + mat.T) / 2


def _readonly(values, shape):
    ary = np.array(values, dtype=float).reshape(shape)
    ary.setflags(write=False)
    return ary


@dataclass(frozen=True, eq=False)
class MotionState:
    """Kalman state of the tracked object.

    Attributes
    ----------
    x_hat : ndarray of shape (4,)
        ``[x, y, dx, dy]`` in pixels and pixels per frame, expressed in the
        coordinates of the current reference frame.
    cov : ndarray of shape (4, 4)
        State covariance, symmetric positive semidefinite.
    frame_index : int
        Frame the estimate refers to.
    """

    x_hat: NDArray[np.floating]
    cov: NDArray[np.floating]
    frame_index: int = 0

    def __post_init__(self):
        x_hat = _readonly(self.x_hat, (4,))
        cov = _readonly(self.cov, (4, 4))
        if not (np.all(np.isfinite(x_hat)) and np.all(np.isfinite(cov))):
            raise ValueError("Motion state must be finite")
        if np.max(np.abs(cov - cov.T)) > _SYM_TOL * max(1.0, np.max(np.abs(cov))):
            raise ValueError("State covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(cov)) < -_SYM_TOL * max(1.0, np.max(np.abs(cov))):
            raise ValueError("State covariance must be positive semidefinite")
        object.__setattr__(self, "x_hat", x_hat)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "frame_index", int(self.frame_index))

    @property
    def position(self):
        """Estimated object center."""
        return Point2(float(self.x_hat[0]), float(self.x_hat[1]))

    @property
    def velocity(self):
        """Estimated displacement per frame as an array of shape (2,)."""
        return np.array(self.x_hat[2:])

    def with_velocity(self, velocity):
        """Return a copy of the state with the velocity components replaced."""
        x_hat = np.array(self.x_hat)
        x_hat[2:] = velocity
        return dataclasses.replace(self, x_hat=x_hat)


def _constant_velocity_transition():
    return np.array(
        [
            [1.0, 0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def _position_selector():
    return np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])


@dataclass(frozen=True, eq=False)
class KalmanConfig:
    """Matrices of the constant velocity filter.

    Attributes
    ----------
    transition : ndarray of shape (4, 4)
        State transition ``F`` for a time step of one frame.
    process_noise : ndarray of shape (4, 4)
        Process noise covariance ``Q``.
    measurement : ndarray of shape (2, 4)
        Measurement matrix ``H`` selecting the position.
    measurement_noise : ndarray of shape (2, 2)
        Measurement noise covariance ``R``.
    initial_covariance : ndarray of shape (4, 4)
        Covariance ``P0`` of a freshly initialized state.
    """

    transition: NDArray[np.floating] = field(default_factory=_constant_velocity_transition)
    process_noise: NDArray[np.floating] = field(
        default_factory=lambda: np.diag([1.0, 1.0, 4.0, 4.0])
    )
    measurement: NDArray[np.floating] = field(default_factory=_position_selector)
    measurement_noise: NDArray[np.floating] = field(default_factory=lambda: np.diag([4.0, 4.0]))
    initial_covariance: NDArray[np.floating] = field(
        default_factory=lambda: np.diag([10.0, 10.0, 100.0, 100.0])
    )

    def __post_init__(self):
        shapes = {
            "transition": (4, 4),
            "process_noise": (4, 4),
            "measurement": (2, 4),
            "measurement_noise": (2, 2),
            "initial_covariance": (4, 4),
        }
        for name, shape in shapes.items():
            object.__setattr__(self, name, _readonly(getattr(self, name), shape))
        if not np.array_equal(self.measurement, _position_selector()):
            raise ValueError("The measurement matrix must select the position components")
        for name in ("process_noise", "measurement_noise", "initial_covariance"):
            mat = getattr(self, name)
            if not np.allclose(mat, mat.T, rtol=0, atol=_SYM_TOL):
                raise ValueError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(mat)) < -_SYM_TOL:
                raise ValueError(f"{name} must be positive semidefinite")

    @classmethod
    def from_diagonals(cls, process_noise, measurement_noise, initial_covariance=None):
        """Create a constant velocity configuration from the diagonals of Q, R and P0."""
        kwargs = {}
        if initial_covariance is not None:
            kwargs["initial_covariance"] = np.diag(initial_covariance)
        return cls(
            process_noise=np.diag(process_noise),
            measurement_noise=np.diag(measurement_noise),
            **kwargs,
        )

    @classmethod
    def from_rcparams(cls):
        """Create the configuration from the current ``kalman.*`` rcParams."""
        params = rcParams.section("kalman")
        return cls.from_diagonals(
            params["process_noise"], params["measurement_noise"], params["initial_covariance"]
        )


@dataclass(frozen=True)
class ReferenceContext:
    """Bookkeeping of the current reference frame.

    Attributes
    ----------
    ref_index : int
        Frame index of the current reference frame.
    n : int
        Reference interval in frames.
    h_ref_to_pending : Homography
        Map from the reference frame to the latest processed frame.
    """

    ref_index: int
    n: int
    h_ref_to_pending: Homography = field(default_factory=Homography.identity)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"Reference interval must be at least 1, got {self.n}")

    def offset(self, pending_index):
        """Frames between the reference and `pending_index`."""
        return pending_index - self.ref_index

    def is_due(self, pending_index):
        """Whether `pending_index` becomes the next reference frame."""
        return self.offset(pending_index) >= self.n


def center_of_mass(mask):
    """Mean of the foreground pixel centers.

    Parameters
    ----------
    mask : BinaryMask

    Returns
    -------
    Point2

    Raises
    ------
    EmptyMaskError

    Examples
    --------
    .. code-block:: python

        import numpy as np
        from pts_track.types import BinaryMask
        from pts_track.motion import center_of_mass

        center_of_mass(BinaryMask(np.array([[True, True], [True, False]])))
        # Point2(x=0.333..., y=0.333...)
    """
    rows, cols = np.nonzero(mask.bits)
    if rows.size == 0:
        raise EmptyMaskError("Center of mass of an empty mask is undefined")
    return Point2(float(cols.mean() + mask.origin.x), float(rows.mean() + mask.origin.y))


def init_state(center, cfg=None, frame_index=0):
    """Create a state at `center` with zero velocity and covariance ``P0``."""
    if cfg is None:
        cfg = KalmanConfig.from_rcparams()
    return MotionState(
        np.array([center[0], center[1], 0.0, 0.0]), cfg.initial_covariance, frame_index
    )


def kalman_predict(state, cfg=None):
    """Propagate the state one frame ahead.

    Parameters
    ----------
    state : MotionState
    cfg : KalmanConfig, optional

    Returns
    -------
    MotionState
        Prior ``F x`` with covariance ``F P F^T + Q`` at ``frame_index + 1``.
    """
    if cfg is None:
        cfg = KalmanConfig.from_rcparams()
    f = cfg.transition
    x_prior = f @ state.x_hat
    cov_prior = _symmetrize(f @ state.cov @ f.T + cfg.process_noise)
    return MotionState(x_prior, cov_prior, state.frame_index + 1)


def kalman_correct(state, z, cfg=None):
    """Update a prior state with a position measurement.

    Parameters
    ----------
    state : MotionState
        Output of :func:`kalman_predict`.
    z : Point2
        Measured position in reference coordinates.
    cfg : KalmanConfig, optional

    Returns
    -------
    MotionState

    Raises
    ------
    SingularInnovationError
        If the innovation covariance ``S = H P H^T + R`` is not invertible.

    Notes
    -----
    The gain is ``K = P H^T S^{-1}``. The posterior covariance uses the Joseph form
    ``(I - K H) P (I - K H)^T + K R K^T``, equal to ``(I - K H) P`` for the optimal
    gain, and it is symmetrized afterwards.
    """
    if cfg is None:
        cfg = KalmanConfig.from_rcparams()
    h_meas = cfg.measurement
    cov = state.cov
    residual = np.asarray(z, dtype=float) - h_meas @ state.x_hat
    innovation = h_meas @ cov @ h_meas.T + cfg.measurement_noise
    if not np.all(np.isfinite(innovation)) or np.linalg.cond(innovation) > _MAX_INNOVATION_COND:
        raise SingularInnovationError("Innovation covariance is singular")
    try:
        gain = np.linalg.solve(innovation, h_meas @ cov).T
    except np.linalg.LinAlgError as err:
        raise SingularInnovationError("Innovation covariance is singular") from err
    x_post = state.x_hat + gain @ residual
    i_kh = np.eye(4) - gain @ h_meas
    cov_post = _symmetrize(i_kh @ cov @ i_kh.T + gain @ cfg.measurement_noise @ gain.T)
    _log.debug("Kalman innovation %s at frame %d", residual, state.frame_index)
    return MotionState(x_post, cov_post, state.frame_index)


def bootstrap_velocity(p_prev, p_curr):
    """Velocity from two consecutive positions in the same reference.

    Returns
    -------
    ndarray of shape (2,)
        ``p_curr - p_prev``.
    """
    return np.array([p_curr[0] - p_prev[0], p_curr[1] - p_prev[1]], dtype=float)


def advance_reference(state, h_old_ref_to_new_ref):
    """Express the state in the coordinates of a new reference frame.

    The position is mapped through the homography and the velocity is the
    displacement between the images of ``p`` and ``p + v``. The covariance is
    propagated to first order with the Jacobian of that map.

    Parameters
    ----------
    state : MotionState
    h_old_ref_to_new_ref : Homography

    Returns
    -------
    MotionState

    Raises
    ------
    PointAtInfinityError
    """
    position = state.position
    moved = Point2(position.x + state.x_hat[2], position.y + state.x_hat[3])
    new_position = apply_homography(h_old_ref_to_new_ref, position)
    new_moved = apply_homography(h_old_ref_to_new_ref, moved)
    jac_p = homography_jacobian(h_old_ref_to_new_ref, position)
    jac_moved = homography_jacobian(h_old_ref_to_new_ref, moved)
    jacobian = np.zeros((4, 4))
    jacobian[:2, :2] = jac_p
    jacobian[2:, :2] = jac_moved - jac_p
    jacobian[2:, 2:] = jac_moved
    x_new = np.array(
        [
            new_position.x,
            new_position.y,
            new_moved.x - new_position.x,
            new_moved.y - new_position.y,
        ]
    )
    cov_new = _symmetrize(jacobian @ state.cov @ jacobian.T)
    return MotionState(x_new, cov_new, state.frame_index)
