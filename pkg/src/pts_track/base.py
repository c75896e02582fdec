"""Helpers to build labelled xarray objects from per-frame arrays."""

import datetime

import numpy as np
import xarray as xr

from pts_track._version import __version__

__all__ = ["generate_dims_coords", "dict_to_dataset", "make_attrs"]

_KNOWN_COORDS = {
    "xy": ["x", "y"],
    "corner": [0, 1, 2, 3],
    "row": [0, 1, 2],
    "col": [0, 1, 2],
}


def generate_dims_coords(shape, var_name, dims=None, coords=None):
    """Generate default dimensions and coordinates for a variable.

    Parameters
    ----------
    shape : iterable of int
        Shape of the variable
    var_name : hashable
        Name of the variable. Axes without a dimension name get
        ``f"{var_name}_dim_{i}"``.
    dims : iterable of hashable, optional
        Dimension names for the leading axes of the variable.
    coords : dict of {hashable_key : array_like}, optional
        Map of dimension names to coordinate values. ``"xy"``, ``"corner"``,
        ``"row"`` and ``"col"`` have default labels; other dimensions without
        coordinate values get an integer range.

    Returns
    -------
    dims : list of hashable
    coords : dict of {hashable_key : ndarray}
    """
    dims = list(dims) if dims is not None else []
    coords = dict(coords) if coords is not None else {}
    if len(dims) > len(shape):
        raise ValueError(
            f"In variable {var_name}, there are more dims ({len(dims)}) given "
            f"than existing ones ({len(shape)})"
        )
    missing_dim_count = 0
    for idx, dim_len in enumerate(shape):
        if idx + 1 > len(dims):
            dims.append(f"{var_name}_dim_{missing_dim_count}")
            missing_dim_count += 1
        dim_name = dims[idx]
        if dim_name in coords:
            continue
        default = _KNOWN_COORDS.get(dim_name)
        if default is not None and len(default) == dim_len:
            coords[dim_name] = np.asarray(default)
        else:
            coords[dim_name] = np.arange(dim_len)
    return dims, {dim: coords[dim] for dim in dims}


def dict_to_dataset(data, *, dims=None, coords=None, attrs=None):
    """Convert a dictionary of numpy arrays to an :class:`xarray.Dataset`.

    Parameters
    ----------
    data : mapping of {hashable_key : array_like}
        Data to convert. Keys are variable names.
    dims : dict of {hashable : sequence of hashable}, optional
        Dimensions of each variable.
    coords : dict of {hashable_key : array_like}, optional
        Coordinates for the dataset, e.g. the frame indexes.
    attrs : mapping of {hashable_key : any}, optional
        JSON-like arbitrary metadata, added to the defaults of :func:`make_attrs`.

    Returns
    -------
    Dataset
    """
    if dims is None:
        dims = {}
    data_vars = {}
    for var_name, values in data.items():
        values = np.asarray(values)
        var_dims, var_coords = generate_dims_coords(
            values.shape, var_name, dims=dims.get(var_name), coords=coords
        )
        data_vars[var_name] = xr.DataArray(values, dims=var_dims, coords=var_coords)
    return xr.Dataset(data_vars=data_vars, attrs=make_attrs(attrs))


def make_attrs(attrs=None):
    """Make standard attributes to attach to xarray datasets.

    Parameters
    ----------
    attrs : mapping of {hashable_key : any}, optional
        Additional attributes to add or overwrite

    Returns
    -------
    dict
        attrs
    """
    default_attrs = {
        "created_at": datetime.datetime.now(datetime.UTC).isoformat(),
        "creation_library": "pts-track",
        "creation_library_version": __version__,
        "creation_library_language": "Python",
    }
    if attrs is not None:
        default_attrs.update(attrs)
    return default_attrs
