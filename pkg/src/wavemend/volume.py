"""Dense 3D scalar volumes, orthogonal-plane slicing, and file I/O.

A volume is a ``(d1, d2, d3)`` float32 array indexed ``[x, y, z]`` with
intensities nominally in ``[0, 1]``.  XY sections are ``data[:, :, i]`` and
XZ sections are ``data[:, i, :]``.  Every dimension must be even and at
least 2 so that a one-level Haar transform of any section is exact.

The file format is a single-line JSON header followed by raw little-endian
float32 voxels, x varying fastest and z slowest:

    {"dims": [d1, d2, d3], "dtype": "f32le", "range": [lo, hi]}\\n<payload>

``range`` records the actual data extrema; it is informational only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

from .errors import DimensionError, VolumeFileError

_DTYPE_TAG = "f32le"


class Plane(Enum):
    XY = 0
    XZ = 1


@dataclass(frozen=True)
class Volume:
    """Immutable 3D scalar field.  Readers may share it freely."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise DimensionError(f"volume data must be 3D, got {arr.ndim}D")
        if any(d < 2 or d % 2 != 0 for d in arr.shape):
            raise DimensionError(
                f"volume dims must each be even and >= 2, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise VolumeFileError("volume data contains non-finite values")
        # Fortran order keeps XY sections contiguous (x fastest, z slowest).
        object.__setattr__(self, "data", np.asfortranarray(arr, dtype=np.float32))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.data.shape)

    def slice_count(self, plane: Plane) -> int:
        return self.dims[2] if plane is Plane.XY else self.dims[1]


class Slice(NamedTuple):
    plane: Plane
    index: int
    pixels: np.ndarray  # XY: (d1, d2); XZ: (d1, d3)


def _check_index(vol: Volume, plane: Plane, i: int) -> None:
    bound = vol.slice_count(plane)
    if not 0 <= i < bound:
        raise IndexError(f"{plane.name} slice index {i} out of range [0, {bound})")


def get_slice(vol: Volume, plane: Plane, i: int) -> Slice:
    """Copy of the requested orthogonal section."""
    _check_index(vol, plane, i)
    if plane is Plane.XY:
        pixels = np.array(vol.data[:, :, i])
    else:
        pixels = np.array(vol.data[:, i, :])
    return Slice(plane, i, pixels)


def put_slice(vol: Volume, plane: Plane, i: int, pixels: Union[np.ndarray, Slice]) -> Volume:
    """New volume with one section replaced; every other voxel is untouched."""
    if isinstance(pixels, Slice):
        if pixels.plane is not plane or pixels.index != i:
            raise DimensionError(
                f"slice tagged ({pixels.plane.name}, {pixels.index}) does not match "
                f"target ({plane.name}, {i})"
            )
        pixels = pixels.pixels
    _check_index(vol, plane, i)
    pixels = np.asarray(pixels)
    d1, d2, d3 = vol.dims
    want = (d1, d2) if plane is Plane.XY else (d1, d3)
    if pixels.shape != want:
        raise DimensionError(
            f"{plane.name} slice must have shape {want}, got {pixels.shape}"
        )
    data = np.array(vol.data)
    if plane is Plane.XY:
        data[:, :, i] = pixels
    else:
        data[:, i, :] = pixels
    return Volume(data)


def save_volume(vol: Volume, path) -> None:
    path = Path(path)
    lo = float(vol.data.min())
    hi = float(vol.data.max())
    header = {"dims": list(vol.dims), "dtype": _DTYPE_TAG, "range": [lo, hi]}
    with path.open("wb") as f:
        f.write((json.dumps(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(vol.data.ravel(order="F"), dtype="<f4").tobytes())


def load_volume(path) -> Volume:
    path = Path(path)
    with path.open("rb") as f:
        line = f.readline()
        payload = f.read()
    try:
        header = json.loads(line.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise VolumeFileError(f"{path}: malformed header: {exc}") from exc
    if not isinstance(header, dict):
        raise VolumeFileError(f"{path}: header must be a JSON object")
    dims = header.get("dims")
    if (
        not isinstance(dims, list)
        or len(dims) != 3
        or not all(isinstance(d, int) and d > 0 for d in dims)
    ):
        raise VolumeFileError(f"{path}: header field 'dims' must be 3 positive ints, got {dims!r}")
    if any(d < 2 or d % 2 != 0 for d in dims):
        raise VolumeFileError(f"{path}: header field 'dims' must be even and >= 2, got {dims}")
    if header.get("dtype") != _DTYPE_TAG:
        raise VolumeFileError(
            f"{path}: header field 'dtype' must be {_DTYPE_TAG!r}, got {header.get('dtype')!r}"
        )
    expected = dims[0] * dims[1] * dims[2] * 4
    if len(payload) != expected:
        raise VolumeFileError(
            f"{path}: payload size mismatch: expected {expected} bytes, got {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(dims, order="F")
    if not np.all(np.isfinite(data)):
        raise VolumeFileError(f"{path}: payload contains non-finite values")
    return Volume(data)
