"""Reading and writing sequences, annotations, correspondences and results."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import xarray as xr
from PIL import Image as PILImage
from PIL import ImageDraw, UnidentifiedImageError

from pts_track.errors import (
    ConfigError,
    IoError,
    LengthMismatchError,
    ParseError,
    UnsupportedFormatError,
)
from pts_track.pipeline import TrackerConfig
from pts_track.rcparams import defaultParams, rc_context, resolve_key
from pts_track.types import RotatedBox

__all__ = [
    "SequenceBundle",
    "parse_vot_line",
    "format_vot_line",
    "read_vot_file",
    "write_vot_file",
    "load_image",
    "save_image",
    "load_matches",
    "write_matches",
    "load_config",
    "load_sequence",
    "write_predictions",
    "read_predictions",
    "save_truth",
    "load_truth",
    "render_overlay",
]

_log = logging.getLogger(__name__)

FRAME_SUFFIXES = (".pgm", ".ppm", ".pnm")
GROUNDTRUTH_FILE = "groundtruth.txt"
RESULTS_FILE = "results.txt"
PREDICTIONS_FILE = "predictions.txt"
TRUTH_FILE = "truth.json"
PREDICTIONS_HEADER = "# frame status pred_x pred_y pred_vx pred_vy score"

_CONFIG_ALIASES = {
    "matcher_key": "matcher.key",
    "mode": "tracker.mode",
    "n": "tracker.n",
    "reinit_gap": "tracker.reinit_gap",
}


def matches_filename(frame_index):
    """Name of the correspondence file of a frame."""
    return f"matches_{frame_index:06d}.txt"


@dataclass
class SequenceBundle:
    """Files of a sequence directory.

    Attributes
    ----------
    frame_paths : list of Path
        Frames in lexicographic order.
    gt_boxes : list of RotatedBox
    matches_paths : list of (Path or None)
    root : Path, optional
    """

    frame_paths: list[Path]
    gt_boxes: list[RotatedBox]
    matches_paths: list[Path | None] = field(default_factory=list)
    root: Path | None = None

    def __post_init__(self):
        if not self.matches_paths:
            self.matches_paths = [None] * len(self.frame_paths)
        lengths = {len(self.frame_paths), len(self.gt_boxes), len(self.matches_paths)}
        if len(lengths) > 1:
            raise LengthMismatchError(
                f"Sequence has {len(self.frame_paths)} frames, {len(self.gt_boxes)} "
                f"ground truth boxes and {len(self.matches_paths)} correspondence files"
            )

    def __len__(self):
        """Number of frames."""
        return len(self.frame_paths)

    def load_frames(self):
        """Load every frame as a grayscale image."""
        return [load_image(path) for path in self.frame_paths]

    def load_matches(self):
        """Load the correspondences of every frame, ``None`` where there is no file."""
        return [None if path is None else load_matches(path) for path in self.matches_paths]


def parse_vot_line(line):
    """Parse a VOT annotation line.

    Parameters
    ----------
    line : str
        Comma separated ``x1,y1,...,x4,y4`` polygon or ``x,y,w,h`` rectangle.

    Returns
    -------
    RotatedBox

    Raises
    ------
    ParseError
    """
    fields = [item.strip() for item in line.strip().split(",")]
    try:
        values = [float(item) for item in fields]
    except ValueError as err:
        raise ParseError(f"Non numeric value in annotation line {line!r}") from err
    if not all(np.isfinite(values)):
        raise ParseError(f"Non finite value in annotation line {line!r}")
    if len(values) == 8:
        return RotatedBox(np.reshape(values, (4, 2)))
    if len(values) == 4:
        return RotatedBox.from_xywh(*values)
    raise ParseError(f"Expected 4 or 8 numbers, got {len(values)} in {line!r}")


def format_vot_line(box):
    """Format a box as 8 comma separated values with 4 decimals."""
    return ",".join(f"{value:.4f}" for value in box.corners.ravel())


def read_vot_file(path):
    """Read one box per non empty line."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as err:
        raise IoError(f"Cannot read annotations from {path}: {err}") from err
    boxes = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            boxes.append(parse_vot_line(line))
        except ParseError as err:
            raise ParseError(f"{path}:{lineno}: {err}") from err
    return boxes


def write_vot_file(path, boxes):
    """Write one VOT line per box, LF terminated."""
    Path(path).write_text(
        "".join(f"{format_vot_line(box)}\n" for box in boxes), encoding="utf-8", newline="\n"
    )


def load_image(path):
    """Load a netpbm image as grayscale intensities in [0, 1].

    Parameters
    ----------
    path : str or Path
        PBM, PGM or PPM file, plain or raw.

    Returns
    -------
    Image
        Color images are converted by averaging the channels.

    Raises
    ------
    IoError
        If the file is missing, unreadable or truncated.
    UnsupportedFormatError
        If the file is not a netpbm image.
    """
    path = Path(path)
    try:
        with PILImage.open(path) as img:
            if img.format != "PPM":
                raise UnsupportedFormatError(f"{path} is a {img.format} image, not netpbm")
            img.load()
            mode = img.mode
            data = np.asarray(img)
    except UnidentifiedImageError as err:
        raise UnsupportedFormatError(f"{path} is not a netpbm image") from err
    except UnsupportedFormatError:
        raise
    except (OSError, SyntaxError, ValueError) as err:
        raise IoError(f"Cannot read image {path}: {err}") from err
    if mode == "1":
        return data.astype(float)
    if mode == "RGB":
        return data.astype(float).mean(axis=-1) / 255
    if mode == "L":
        return data.astype(float) / 255
    if mode.startswith("I"):
        return data.astype(float) / 65535
    raise UnsupportedFormatError(f"Unsupported netpbm mode {mode} in {path}")


def save_image(path, image):
    """Save intensities in [0, 1] as a raw PGM (2D) or PPM (RGB) file."""
    image = np.asarray(image, dtype=float)
    pixels = np.round(np.clip(image, 0, 1) * 255).astype(np.uint8)
    try:
        PILImage.fromarray(pixels).save(Path(path), format="PPM")
    except OSError as err:
        raise IoError(f"Cannot write image {path}: {err}") from err


def load_matches(path):
    """Load correspondences, one ``sx sy dx dy`` line per match.

    ``#`` starts a comment. An empty file has no correspondences.

    Returns
    -------
    ndarray of shape (n, 4)
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as err:
        raise IoError(f"Cannot read correspondences from {path}: {err}") from err
    rows = []
    for lineno, line in enumerate(lines, start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        items = content.split()
        if len(items) != 4:
            raise ParseError(f"{path}:{lineno}: expected 4 values, got {len(items)}")
        try:
            rows.append([float(item) for item in items])
        except ValueError as err:
            raise ParseError(f"{path}:{lineno}: non numeric value") from err
        if not np.all(np.isfinite(rows[-1])):
            raise ParseError(f"{path}:{lineno}: non finite value")
    return np.array(rows, dtype=float).reshape(-1, 4)


def write_matches(path, matches):
    """Write correspondences as ``sx sy dx dy`` lines."""
    matches = np.asarray(matches, dtype=float).reshape(-1, 4)
    Path(path).write_text(
        "".join(" ".join(f"{value:.6f}" for value in row) + "\n" for row in matches),
        encoding="utf-8",
    )


def _flatten(mapping, prefix=""):
    for key, value in mapping.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            yield from _flatten(value, prefix=f"{full}.")
        else:
            yield full, value


def load_config(path):
    """Load a tracker configuration from a JSON file.

    Keys are rcParams names, either dotted (``"region.velocity_threshold"``),
    nested (``{"region": {"velocity_threshold": 8}}``) or bare when unique
    (``"velocity_threshold"``). Missing keys take the current rcParams values.

    Returns
    -------
    TrackerConfig

    Raises
    ------
    ConfigError
        Naming the offending key, for unknown keys or invalid values.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise IoError(f"Cannot read configuration {path}: {err}") from err
    try:
        content = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as err:
        raise ConfigError("<root>", f"invalid JSON in {path}: {err}") from err
    if not isinstance(content, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    params = {}
    for key, value in _flatten(content):
        full_key = _CONFIG_ALIASES.get(key) or resolve_key(key)
        if full_key is None:
            raise ConfigError(key, "unknown configuration key")
        try:
            params[full_key] = defaultParams[full_key][1](value)
        except (ValueError, TypeError) as err:
            raise ConfigError(key, str(err)) from err
    _log.debug("Configuration %s overrides %s", path, sorted(params))
    with rc_context(rc=params):
        return TrackerConfig.from_rcparams()


def load_sequence(directory):
    """Collect the files of a sequence directory.

    Frames are the netpbm files in lexicographic order, ground truth comes from
    ``groundtruth.txt`` and the correspondences of frame ``i`` from
    ``matches_%06d.txt`` named after the frame file stem when numeric, otherwise
    after its position.

    Raises
    ------
    IoError
        If the directory, its frames or the ground truth are missing.
    LengthMismatchError
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise IoError(f"Sequence directory {directory} does not exist")
    frame_paths = sorted(
        path for path in directory.iterdir() if path.suffix.lower() in FRAME_SUFFIXES
    )
    if not frame_paths:
        raise IoError(f"No netpbm frames found in {directory}")
    gt_path = directory / GROUNDTRUTH_FILE
    if not gt_path.is_file():
        raise IoError(f"Missing {GROUNDTRUTH_FILE} in {directory}")
    gt_boxes = read_vot_file(gt_path)
    matches_paths = []
    for position, frame_path in enumerate(frame_paths):
        index = int(frame_path.stem) if frame_path.stem.isdigit() else position
        candidate = directory / matches_filename(index)
        matches_paths.append(candidate if candidate.is_file() else None)
    return SequenceBundle(frame_paths, gt_boxes, matches_paths, root=directory)


def write_predictions(path, record):
    """Write per-frame predictions of a :class:`~pts_track.pipeline.TrackRecord`.

    Each line holds ``frame status pred_x pred_y pred_vx pred_vy score``. Frames
    where the tracker was initialized from ground truth have status ``init``.
    """
    lines = [PREDICTIONS_HEADER]
    for out in record.outputs:
        status = "init" if out.initialized else str(out.status)
        x, y = out.predicted_center
        vx, vy = out.predicted_velocity
        lines.append(
            f"{out.frame_index} {status} {x:.6f} {y:.6f} {vx:.6f} {vy:.6f} {out.score:.6f}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_predictions(path):
    """Read a predictions file.

    Returns
    -------
    Dataset
        ``predicted_center``, ``predicted_velocity``, ``score`` and ``status``
        over the ``frame`` dimension.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as err:
        raise IoError(f"Cannot read predictions from {path}: {err}") from err
    frames, statuses, values = [], [], []
    for lineno, line in enumerate(lines, start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        items = content.split()
        if len(items) != 7:
            raise ParseError(f"{path}:{lineno}: expected 7 fields, got {len(items)}")
        try:
            frames.append(int(items[0]))
            values.append([float(item) for item in items[2:]])
        except ValueError as err:
            raise ParseError(f"{path}:{lineno}: non numeric value") from err
        statuses.append(items[1])
    values = np.array(values, dtype=float).reshape(-1, 5)
    return xr.Dataset(
        {
            "predicted_center": (("frame", "xy"), values[:, :2]),
            "predicted_velocity": (("frame", "xy"), values[:, 2:4]),
            "score": (("frame",), values[:, 4]),
            "status": (("frame",), np.array(statuses, dtype=str)),
        },
        coords={"frame": frames, "xy": ["x", "y"]},
    )


def save_truth(path, truth):
    """Write a truth dataset as JSON (``Dataset.to_dict(data="list")``).

    The ``created_at`` attribute is left out so the file only depends on the scenario
    and the seed.
    """
    ds = truth if isinstance(truth, xr.Dataset) else truth.to_dataset()
    ds = ds.copy()
    ds.attrs = {key: value for key, value in ds.attrs.items() if key != "created_at"}
    Path(path).write_text(json.dumps(ds.to_dict(data="list")), encoding="utf-8")


def load_truth(path):
    """Read a dataset written by :func:`save_truth`."""
    path = Path(path)
    try:
        content = json.loads(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise IoError(f"Cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ParseError(f"{path} is not valid JSON: {err}") from err
    return xr.Dataset.from_dict(content)


def render_overlay(path, frame, boxes, colors=((255, 0, 0), (0, 255, 0))):
    """Draw box outlines on a frame and save it as PPM.

    Parameters
    ----------
    path : str or Path
    frame : Image
    boxes : sequence of RotatedBox
        Drawn in order with the matching entry of `colors`.
    colors : sequence of tuple of int
    """
    gray = np.round(np.clip(np.asarray(frame, dtype=float), 0, 1) * 255).astype(np.uint8)
    img = PILImage.fromarray(gray).convert("RGB")
    draw = ImageDraw.Draw(img)
    for box, color in zip(boxes, colors):
        if box is None or box.area == 0:
            continue
        draw.polygon([tuple(corner) for corner in box.corners.tolist()], outline=tuple(color))
    try:
        img.save(Path(path), format="PPM")
    except OSError as err:
        raise IoError(f"Cannot write overlay {path}: {err}") from err
