"""Synthetic sequences with known object motion, camera motion and correspondences.

Objects are textured rectangles (or ellipses) moving along piecewise constant
velocity trajectories in world coordinates. Frames look at the world through a
per-frame camera homography with random jitter. Occluders are flat rectangles
fixed on screen. Background correspondences between consecutive frames are
emitted directly, with optional noise and outliers.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import lazy_loader as _lazy
import numpy as np

from pts_track.base import dict_to_dataset
from pts_track.data import (
    GROUNDTRUTH_FILE,
    TRUTH_FILE,
    matches_filename,
    save_image,
    save_truth,
    write_matches,
    write_vot_file,
)
from pts_track.errors import IoError, SpecError
from pts_track.geometry import Homography, project_points
from pts_track.types import RotatedBox
from pts_track.validate import validate_prob

if TYPE_CHECKING:
    import scipy
else:
    scipy = _lazy.load("scipy")

__all__ = [
    "ObjectSpec",
    "CameraSpec",
    "OccluderSpec",
    "ScenarioSpec",
    "SyntheticTruth",
    "value_noise",
    "generate",
    "standard_suite",
    "get_scenario",
    "list_scenarios",
    "scenario_from_dict",
    "render_sequence",
]

_log = logging.getLogger(__name__)

_WORLD_MARGIN = 64


@dataclass(frozen=True)
class ObjectSpec:
    """Textured object moving along a piecewise constant velocity trajectory.

    Attributes
    ----------
    start : tuple of (float, float)
        World center at frame 0.
    size : tuple of (int, int)
        Width and height in pixels.
    texture_seed : int
    segments : tuple of (int, (float, float))
        ``(n_frames, (vx, vy))`` pieces, consumed in order starting at frame 1.
        The last velocity is kept once the segments are exhausted.
    shape : {"rect", "ellipse"}
    allow_exit : bool, default False
        Whether the trajectory may leave the frame.
    """

    start: tuple[float, float]
    size: tuple[int, int] = (20, 20)
    texture_seed: int = 1
    segments: tuple = ()
    shape: str = "rect"
    allow_exit: bool = False

    def velocity_at(self, frame_index):
        """World displacement between `frame_index - 1` and `frame_index`."""
        if frame_index <= 0 or not self.segments:
            return np.zeros(2)
        elapsed = 0
        for n_frames, velocity in self.segments:
            elapsed += n_frames
            if frame_index <= elapsed:
                return np.asarray(velocity, dtype=float)
        return np.asarray(self.segments[-1][1], dtype=float)

    def centers(self, n_frames):
        """World centers over `n_frames` frames, shape (n_frames, 2)."""
        steps = np.array([self.velocity_at(t) for t in range(n_frames)]).reshape(-1, 2)
        return np.asarray(self.start, dtype=float) + np.cumsum(steps, axis=0)


@dataclass(frozen=True)
class CameraSpec:
    """Camera jitter around the identity view.

    Attributes
    ----------
    translation_sigma : float
        Standard deviation of the per-frame translation in pixels.
    rotation_sigma : float
        Standard deviation of the per-frame rotation in degrees, about the
        image center.
    """

    translation_sigma: float = 0.0
    rotation_sigma: float = 0.0


@dataclass(frozen=True)
class OccluderSpec:
    """Flat screen-space rectangle shown over ``[start, stop)`` frames."""

    rect: tuple[float, float, float, float]
    start: int
    stop: int
    intensity: float = 0.5


@dataclass(frozen=True)
class ScenarioSpec:
    """Description of a synthetic sequence.

    Attributes
    ----------
    name : str
    width, height : int
        Image size in pixels.
    n_frames : int
    target : ObjectSpec
    camera : CameraSpec
    distractors : tuple of ObjectSpec
        Drawn over the target.
    occluders : tuple of OccluderSpec
        Drawn over everything.
    background_seed : int
    match_noise : float
        Standard deviation in pixels of the noise added to the correspondences.
    outlier_fraction : float
        Fraction of correspondences replaced by random points.
    n_matches : int
        Correspondences emitted per frame.
    """

    name: str
    width: int = 256
    height: int = 192
    n_frames: int = 40
    target: ObjectSpec = field(default_factory=lambda: ObjectSpec(start=(128.0, 96.0)))
    camera: CameraSpec = field(default_factory=CameraSpec)
    distractors: tuple = ()
    occluders: tuple = ()
    background_seed: int = 0
    match_noise: float = 0.0
    outlier_fraction: float = 0.0
    n_matches: int = 200

    def replace(self, **changes):
        """Return a copy with some fields changed."""
        return dataclasses.replace(self, **changes)

    def validate(self):
        """Check the specification.

        Raises
        ------
        SpecError
        """
        if self.width < 32 or self.height < 32:
            raise SpecError(f"{self.name}: image must be at least 32x32")
        if self.n_frames < 1:
            raise SpecError(f"{self.name}: at least one frame is needed")
        if self.match_noise < 0:
            raise SpecError(f"{self.name}: match noise must be non negative")
        if self.n_matches < 0:
            raise SpecError(f"{self.name}: number of matches must be non negative")
        try:
            validate_prob(self.outlier_fraction, allow_0=True)
        except ValueError as err:
            raise SpecError(f"{self.name}: {err}") from err
        for obj in (self.target, *self.distractors):
            self._validate_object(obj)
        for occluder in self.occluders:
            _, _, w, h = occluder.rect
            if w <= 0 or h <= 0 or occluder.stop < occluder.start:
                raise SpecError(f"{self.name}: invalid occluder {occluder}")
            if not 0 <= occluder.intensity <= 1:
                raise SpecError(f"{self.name}: occluder intensity must be in [0, 1]")

    def _validate_object(self, obj):
        w, h = obj.size
        if w <= 0 or h <= 0:
            raise SpecError(f"{self.name}: object size must be positive, got {obj.size}")
        if obj.shape not in ("rect", "ellipse"):
            raise SpecError(f"{self.name}: unknown object shape {obj.shape!r}")
        if obj.allow_exit:
            return
        centers = obj.centers(self.n_frames)
        radius = max(w, h) / 2
        inside = (
            (centers[:, 0] >= radius)
            & (centers[:, 0] <= self.width - radius)
            & (centers[:, 1] >= radius)
            & (centers[:, 1] <= self.height - radius)
        )
        if not inside.all():
            first = int(np.flatnonzero(~inside)[0])
            raise SpecError(
                f"{self.name}: object leaves the frame at frame {first}, "
                f"center {tuple(centers[first])}"
            )


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    """Ground truth of a generated sequence.

    Attributes
    ----------
    centers : ndarray of shape (n_frames, 2)
        Target center in frame coordinates.
    velocities : ndarray of shape (n_frames, 2)
        Difference of consecutive centers, null at frame 0.
    world_centers : ndarray of shape (n_frames, 2)
    camera : ndarray of shape (n_frames, 3, 3)
        World to frame homographies.
    step_homographies : ndarray of shape (n_frames, 3, 3)
        Previous frame to current frame homographies, identity at frame 0.
    boxes : list of RotatedBox
    matches : list of ndarray of shape (n, 4)
        Emitted correspondences from the previous frame, empty at frame 0.
    visibility : ndarray of shape (n_frames,)
        Visible fraction of the target.
    """

    centers: np.ndarray
    velocities: np.ndarray
    world_centers: np.ndarray
    camera: np.ndarray
    step_homographies: np.ndarray
    boxes: list
    matches: list
    visibility: np.ndarray

    def __len__(self):
        """Number of frames."""
        return len(self.boxes)

    def to_dataset(self, attrs=None):
        """Convert to a :class:`xarray.Dataset` over the ``frame`` dimension."""
        data = {
            "center": self.centers,
            "velocity": self.velocities,
            "world_center": self.world_centers,
            "camera": self.camera,
            "homography": self.step_homographies,
            "box": np.array([box.corners for box in self.boxes]),
            "visibility": self.visibility,
            "n_matches": np.array([len(m) for m in self.matches]),
        }
        dims = {
            "center": ["frame", "xy"],
            "velocity": ["frame", "xy"],
            "world_center": ["frame", "xy"],
            "camera": ["frame", "row", "col"],
            "homography": ["frame", "row", "col"],
            "box": ["frame", "corner", "xy"],
            "visibility": ["frame"],
            "n_matches": ["frame"],
        }
        coords = {"frame": np.arange(len(self.boxes))}
        return dict_to_dataset(data, dims=dims, coords=coords, attrs=attrs)


def value_noise(shape, seed, cell=4, octaves=2, low=0.1, high=0.9):
    """Smooth random texture.

    Random values on a coarse grid are bilinearly interpolated, and octaves with
    halved cell size are added with halved amplitude.

    Parameters
    ----------
    shape : tuple of (int, int)
        ``(height, width)``.
    seed : int
    cell : int, default 4
        Size in pixels of the coarsest grid cell.
    octaves : int, default 2
    low, high : float
        Output range.

    Returns
    -------
    ndarray of float
    """
    rng = np.random.default_rng(seed)
    height, width = shape
    texture = np.zeros(shape)
    amplitude = 1.0
    for _ in range(octaves):
        grid = rng.random((height // cell + 2, width // cell + 2))
        rows = np.arange(height) / cell
        cols = np.arange(width) / cell
        grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
        texture += amplitude * scipy.ndimage.map_coordinates(grid, [grid_r, grid_c], order=1)
        amplitude /= 2
        cell = max(cell // 2, 1)
    span = np.ptp(texture)
    texture = (texture - texture.min()) / (span if span > 0 else 1.0)
    return low + (high - low) * texture


def _camera_matrix(rng, camera, width, height):
    """World to frame homography: rotation about the image center plus translation."""
    angle = np.deg2rad(rng.normal(0.0, camera.rotation_sigma)) if camera.rotation_sigma else 0.0
    tx, ty = (
        rng.normal(0.0, camera.translation_sigma, size=2)
        if camera.translation_sigma
        else (0.0, 0.0)
    )
    cx, cy = width / 2, height / 2
    cos, sin = np.cos(angle), np.sin(angle)
    return np.array(
        [
            [cos, -sin, cx - cos * cx + sin * cy + tx],
            [sin, cos, cy - sin * cx - cos * cy + ty],
            [0.0, 0.0, 1.0],
        ]
    )


def _object_layer(obj, center, textures, world_xy):
    """Coverage and intensities of an object sampled at world coordinates."""
    w, h = obj.size
    u = world_xy[..., 0] - (center[0] - w / 2)
    v = world_xy[..., 1] - (center[1] - h / 2)
    inside = (u >= 0) & (u < w) & (v >= 0) & (v < h)
    if obj.shape == "ellipse":
        inside &= ((u - w / 2) / (w / 2)) ** 2 + ((v - h / 2) / (h / 2)) ** 2 <= 1
    if obj.texture_seed not in textures:
        textures[obj.texture_seed] = value_noise((h, w), obj.texture_seed)
    values = scipy.ndimage.map_coordinates(
        textures[obj.texture_seed], [v[inside], u[inside]], order=1, mode="nearest"
    )
    return inside, values


def _emit_matches(rng, spec, h_step):
    """Background correspondences from the previous frame to the current one."""
    n_matches = spec.n_matches
    src = rng.random((n_matches, 2)) * [spec.width, spec.height]
    dst = project_points(Homography(h_step), src) if n_matches else np.empty((0, 2))
    if spec.match_noise:
        dst = dst + rng.normal(0.0, spec.match_noise, size=dst.shape)
    n_outliers = int(round(spec.outlier_fraction * n_matches))
    if n_outliers:
        idx = rng.choice(n_matches, size=n_outliers, replace=False)
        dst[idx] = rng.random((n_outliers, 2)) * [spec.width, spec.height]
    return np.hstack((src, dst))


def generate(spec, seed=0):
    """Render a scenario.

    Parameters
    ----------
    spec : ScenarioSpec
    seed : int, default 0
        Seed of the camera jitter, correspondence noise and outliers. Textures
        only depend on the seeds in `spec`.

    Returns
    -------
    frames : list of ndarray
        Grayscale frames of shape ``(height, width)``.
    truth : SyntheticTruth

    Raises
    ------
    SpecError
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    width, height, n_frames = spec.width, spec.height, spec.n_frames
    margin = _WORLD_MARGIN
    background = value_noise((height + 2 * margin, width + 2 * margin), spec.background_seed)
    textures = {}
    grid_x, grid_y = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    frame_xy = np.column_stack((grid_x.ravel(), grid_y.ravel()))

    target_centers = spec.target.centers(n_frames)
    distractor_centers = [obj.centers(n_frames) for obj in spec.distractors]
    w, h = spec.target.size
    frames, boxes, matches = [], [], []
    cameras = np.empty((n_frames, 3, 3))
    steps = np.empty((n_frames, 3, 3))
    centers = np.empty((n_frames, 2))
    visibility = np.empty(n_frames)
    for t in range(n_frames):
        camera = np.eye(3) if t == 0 else _camera_matrix(rng, spec.camera, width, height)
        cameras[t] = camera
        steps[t] = np.eye(3) if t == 0 else camera @ np.linalg.inv(cameras[t - 1])
        steps[t] /= steps[t][2, 2]
        world_xy = project_points(Homography(np.linalg.inv(camera)), frame_xy).reshape(
            height, width, 2
        )
        frame = scipy.ndimage.map_coordinates(
            background,
            [world_xy[..., 1] + margin, world_xy[..., 0] + margin],
            order=1,
            mode="nearest",
        )
        target_inside, target_values = _object_layer(
            spec.target, target_centers[t], textures, world_xy
        )
        frame[target_inside] = target_values
        visible = target_inside.copy()
        for obj, obj_centers in zip(spec.distractors, distractor_centers):
            inside, values = _object_layer(obj, obj_centers[t], textures, world_xy)
            frame[inside] = values
            visible &= ~inside
        for occluder in spec.occluders:
            if occluder.start <= t < occluder.stop:
                ox, oy, ow, oh = occluder.rect
                covered = (grid_x >= ox) & (grid_x < ox + ow) & (grid_y >= oy) & (grid_y < oy + oh)
                frame[covered] = occluder.intensity
                visible &= ~covered
        frames.append(np.clip(frame, 0.0, 1.0))
        visibility[t] = min(np.count_nonzero(visible) / (w * h), 1.0)

        cx, cy = target_centers[t]
        corners = np.array([cx, cy]) + np.array([[-w, -h], [w, -h], [w, h], [-w, h]]) / 2
        boxes.append(RotatedBox(project_points(Homography(camera), corners)))
        centers[t] = project_points(Homography(camera), [target_centers[t]])[0]
        matches.append(np.empty((0, 4)) if t == 0 else _emit_matches(rng, spec, steps[t]))

    velocities = np.zeros_like(centers)
    velocities[1:] = np.diff(centers, axis=0)
    truth = SyntheticTruth(
        centers=centers,
        velocities=velocities,
        world_centers=target_centers,
        camera=cameras,
        step_homographies=steps,
        boxes=boxes,
        matches=matches,
        visibility=visibility,
    )
    _log.debug("Generated %s with seed %d: %d frames", spec.name, seed, n_frames)
    return frames, truth


def _scenarios():
    """Scenario factories of the standard suite, by name."""
    target = ObjectSpec(start=(128.0, 96.0), size=(20, 20), texture_seed=11)
    suite = {
        "static": ScenarioSpec("static", target=target),
        "constant-velocity": ScenarioSpec(
            "constant-velocity",
            n_frames=50,
            target=dataclasses.replace(target, start=(40.0, 96.0), segments=((49, (3.0, 0.0)),)),
        ),
        "acceleration": ScenarioSpec(
            "acceleration",
            n_frames=46,
            target=dataclasses.replace(
                target,
                start=(40.0, 96.0),
                segments=((15, (1.0, 0.0)), (15, (3.0, 0.0)), (15, (6.0, 0.0))),
            ),
        ),
        "camera-shake": ScenarioSpec(
            "camera-shake",
            n_frames=50,
            target=target,
            camera=CameraSpec(translation_sigma=4.0, rotation_sigma=1.0),
            match_noise=0.5,
            outlier_fraction=0.1,
        ),
        "camera-shake+motion": ScenarioSpec(
            "camera-shake+motion",
            n_frames=100,
            target=dataclasses.replace(
                target, start=(50.0, 70.0), segments=((99, (1.5, 0.5)),)
            ),
            camera=CameraSpec(translation_sigma=4.0, rotation_sigma=1.0),
            match_noise=1.0,
            outlier_fraction=0.2,
        ),
        "distractor-cross": ScenarioSpec(
            "distractor-cross",
            width=384,
            height=192,
            n_frames=23,
            target=ObjectSpec(
                start=(30.0, 80.0),
                size=(16, 16),
                texture_seed=7,
                segments=((5, (3.0, 0.0)), (5, (8.0, 0.0)), (12, (20.0, 0.0))),
            ),
            distractors=(
                ObjectSpec(
                    start=(223.0, 96.0),
                    size=(16, 16),
                    texture_seed=7,
                    segments=((22, (-1.0, 0.0)),),
                ),
            ),
        ),
        "occlusion-5-frame": ScenarioSpec(
            "occlusion-5-frame",
            n_frames=40,
            target=dataclasses.replace(target, start=(60.0, 96.0), segments=((39, (2.0, 0.0)),)),
            occluders=(OccluderSpec(rect=(80.0, 76.0, 12.0, 40.0), start=15, stop=20),),
        ),
        "occlusion-full": ScenarioSpec(
            "occlusion-full",
            n_frames=40,
            target=target,
            occluders=(OccluderSpec(rect=(68.0, 36.0, 120.0, 120.0), start=20, stop=24),),
        ),
    }
    return suite


def list_scenarios():
    """Names of the standard scenarios."""
    return list(_scenarios())


def get_scenario(name, **overrides):
    """Get a standard scenario by name, optionally overriding some fields.

    Raises
    ------
    KeyError
        If `name` is not a standard scenario.
    """
    scenarios = _scenarios()
    if name not in scenarios:
        raise KeyError(f"Unknown scenario {name!r}, available: {sorted(scenarios)}")
    spec = scenarios[name]
    return spec.replace(**overrides) if overrides else spec


def standard_suite():
    """The fixed scenario library as a list of ``(name, ScenarioSpec)``."""
    return list(_scenarios().items())


def render_sequence(spec, out_dir, seed=0):
    """Generate a scenario and write it as a sequence directory.

    The directory receives ``%06d.pgm`` frames, ``groundtruth.txt``,
    ``matches_%06d.txt`` files and ``truth.json``.

    Returns
    -------
    SyntheticTruth

    Raises
    ------
    IoError
        If the directory cannot be written.
    """
    out_dir = Path(out_dir)
    frames, truth = generate(spec, seed)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for t, frame in enumerate(frames):
            save_image(out_dir / f"{t:06d}.pgm", frame)
            write_matches(out_dir / matches_filename(t), truth.matches[t])
        write_vot_file(out_dir / GROUNDTRUTH_FILE, truth.boxes)
        save_truth(
            out_dir / TRUTH_FILE,
            truth.to_dataset(attrs={"scenario": spec.name, "seed": int(seed)}),
        )
    except OSError as err:
        if isinstance(err, IoError):
            raise
        raise IoError(f"Cannot write sequence to {out_dir}: {err}") from err
    _log.info("Wrote %d frames of %s to %s", len(frames), spec.name, out_dir)
    return truth


def _build(cls, mapping, where):
    if not isinstance(mapping, dict):
        raise SpecError(f"{where} must be an object, got {type(mapping).__name__}")
    names = {item.name for item in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - names)
    if unknown:
        raise SpecError(f"Unknown {where} fields: {unknown}")
    try:
        return cls(**mapping)
    except TypeError as err:
        raise SpecError(f"Invalid {where}: {err}") from err


def _object_from_dict(mapping, where):
    mapping = dict(mapping)
    for key in ("start", "size"):
        if key in mapping:
            mapping[key] = tuple(mapping[key])
    if "segments" in mapping:
        try:
            mapping["segments"] = tuple(
                (int(n_frames), tuple(float(v) for v in velocity))
                for n_frames, velocity in mapping["segments"]
            )
        except (TypeError, ValueError) as err:
            raise SpecError(f"Invalid {where} segments: {err}") from err
    return _build(ObjectSpec, mapping, where)


def scenario_from_dict(mapping):
    """Build a :class:`ScenarioSpec` from its JSON form.

    Nested objects follow the dataclass fields, segments are
    ``[n_frames, [vx, vy]]`` pairs and occluder rectangles ``[x, y, w, h]``.

    Raises
    ------
    SpecError
        For unknown fields or values of the wrong shape.
    """
    if not isinstance(mapping, dict):
        raise SpecError("Scenario must be a JSON object")
    mapping = dict(mapping)
    if "name" not in mapping:
        raise SpecError("Scenario needs a name")
    if "target" in mapping:
        mapping["target"] = _object_from_dict(mapping["target"], "target")
    if "camera" in mapping:
        mapping["camera"] = _build(CameraSpec, mapping["camera"], "camera")
    mapping["distractors"] = tuple(
        _object_from_dict(obj, f"distractor {i}")
        for i, obj in enumerate(mapping.get("distractors", ()))
    )
    occluders = []
    for i, occluder in enumerate(mapping.get("occluders", ())):
        occluder = dict(occluder) if isinstance(occluder, dict) else occluder
        if isinstance(occluder, dict) and "rect" in occluder:
            occluder["rect"] = tuple(occluder["rect"])
        occluders.append(_build(OccluderSpec, occluder, f"occluder {i}"))
    mapping["occluders"] = tuple(occluders)
    spec = _build(ScenarioSpec, mapping, "scenario")
    spec.validate()
    return spec
