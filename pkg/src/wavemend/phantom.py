"""Synthetic ellipsoid phantoms for experiments and tests."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .motion import rotation_matrix
from .rng import STREAM_DATA, substream
from .volume import Volume


def ellipsoid_phantom(
    dims: tuple[int, int, int],
    n_ellipsoids: int = 4,
    seed: int = 0,
    smooth_sigma: float = 1.0,
    background: float = 0.3,
) -> Volume:
    """Randomly placed, rotated ellipsoids over a smooth random texture,
    lightly smoothed and min-max normalised to [0, 1].

    The background texture keeps structure in every slice of every plane, so
    per-plane metrics are not dominated by empty sections.
    """
    rng = substream(seed, STREAM_DATA)
    coords = np.stack(
        np.meshgrid(*[np.linspace(-1.0, 1.0, d) for d in dims], indexing="ij")
    )
    vol = np.zeros(dims, dtype=np.float64)
    for _ in range(n_ellipsoids):
        center = rng.uniform(-0.45, 0.45, 3)
        semi_axes = rng.uniform(0.2, 0.6, 3)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        rot = rotation_matrix(axis, rng.uniform(0.0, 180.0))
        intensity = rng.uniform(0.3, 1.0)
        shifted = coords - center[:, None, None, None]
        rotated = np.einsum("ij,j...->i...", rot, shifted)
        r2 = ((rotated / semi_axes[:, None, None, None]) ** 2).sum(axis=0)
        vol += intensity * (r2 <= 1.0)
    if background > 0:
        texture = ndimage.gaussian_filter(rng.normal(size=dims), sigma=3.0)
        span = texture.max() - texture.min()
        if span > 0:
            vol += background * (texture - texture.min()) / span
    if smooth_sigma > 0:
        vol = ndimage.gaussian_filter(vol, smooth_sigma)
    lo, hi = vol.min(), vol.max()
    if hi > lo:
        vol = (vol - lo) / (hi - lo)
    else:
        vol = np.zeros(dims)
    return Volume(vol.astype(np.float32))
