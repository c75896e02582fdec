"""pts-track input validation utilities."""

import warnings

import numpy as np

from pts_track.errors import LengthMismatchError
from pts_track.rcparams import defaultParams, rcParams


def validate_or_use_rcparam(arg_in, rckey):
    """Validate an arbitrary argument that defaults to an rcParam.

    Parameters
    ----------
    arg_in : any
        Input value for argument that defaults to `rckey`
    rckey : str
        The rcParams key from which to take the default value when `arg_in`
        is ``None`` and the validation function otherwise.

    Returns
    -------
    arg_out : any
    """
    if arg_in is None:
        return rcParams[rckey]
    return defaultParams[rckey][1](arg_in)


def validate_prob(prob, allow_0=False):
    r"""Validate required `prob` argument.

    Parameters
    ----------
    prob : float
    allow_0 : bool, default False
        Whether to restrict to :math:`(0, 1]` for probability values
        or, when True, include 0 to allow :math:`[0, 1]` as valid probabilities.

    Returns
    -------
    float
    """
    if allow_0 and not 1 >= prob >= 0:
        raise ValueError(f"The value of prob should be in the interval [0, 1] but got {prob}")
    if not allow_0 and not 1 >= prob > 0:
        raise ValueError(f"The value of prob should be in the interval (0, 1] but got {prob}")
    return prob


def validate_image(image, name="image"):
    """Validate a grayscale image and return it as a float array.

    Parameters
    ----------
    image : array_like
        2D array of intensities, expected in [0, 1].
    name : str, default "image"
        Name used in error messages.

    Returns
    -------
    ndarray of float, shape (height, width)
        Values outside [0, 1] are clipped with a warning.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or image.size == 0:
        raise ValueError(f"{name} must be a non empty 2D array, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise ValueError(f"{name} contains non finite intensities")
    if image.min() < 0 or image.max() > 1:
        warnings.warn(f"{name} intensities outside [0, 1] have been clipped", UserWarning)
        image = np.clip(image, 0, 1)
    return image


def validate_aligned(**sequences):
    """Check that all keyword sequences have the same length.

    Returns
    -------
    int
        The common length.

    Raises
    ------
    LengthMismatchError
    """
    lengths = {name: len(seq) for name, seq in sequences.items() if seq is not None}
    if len(set(lengths.values())) > 1:
        details = ", ".join(f"{name}={length}" for name, length in lengths.items())
        raise LengthMismatchError(f"Per-frame inputs are not aligned: {details}")
    return next(iter(lengths.values()), 0)
