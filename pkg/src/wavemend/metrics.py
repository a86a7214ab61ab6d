"""Image-quality and slice-consistency metrics.

PSNR over full volumes or single fields, windowed SSIM on 2D fields, a
z-direction discontinuity index quantifying banding between adjacent XY
sections, and per-plane summary tables (mean of the per-slice metric over
every slice of a plane).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .errors import DimensionError
from .volume import Volume

_Z_DISC_EPS = 1e-12  # gradient floor; keeps zero-gradient volumes well defined


def _as_array(x) -> np.ndarray:
    data = x.data if isinstance(x, Volume) else np.asarray(x)
    return data.astype(np.float64)


def psnr(a, b, data_range: float = 1.0) -> float:
    """10 log10(range^2 / MSE); +inf when the inputs are identical."""
    a = _as_array(a)
    b = _as_array(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    if data_range <= 0:
        raise ValueError(f"data_range must be positive, got {data_range}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range ** 2 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(
    a,
    b,
    data_range: float = 1.0,
    win_size: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean local structural similarity with a Gaussian window.

    Local statistics are Gaussian-weighted population moments; the map is
    averaged over the window-valid interior only.
    """
    a = _as_array(a)
    b = _as_array(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise DimensionError(f"ssim expects 2D fields, got {a.ndim}D")
    if min(a.shape) < win_size:
        raise DimensionError(f"image {a.shape} smaller than window {win_size}")
    win = _gaussian_window(win_size, sigma)
    r = win_size // 2

    def local(x):
        return ndimage.correlate(x, win, mode="constant")[r:-r, r:-r]

    mu_a = local(a)
    mu_b = local(b)
    var_a = local(a * a) - mu_a ** 2
    var_b = local(b * b) - mu_b ** 2
    cov = local(a * b) - mu_a * mu_b
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def z_discontinuity(vol) -> float:
    """Mean |difference| between adjacent XY sections, normalised by the mean
    in-slice gradient magnitude (forward differences).  0 for constant
    volumes; maximal for alternating extreme slices."""
    data = _as_array(vol)
    if data.ndim != 3 or data.shape[2] < 2:
        raise DimensionError(f"need a 3D volume with d3 >= 2, got shape {data.shape}")
    num = float(np.mean(np.abs(np.diff(data, axis=2))))
    if num == 0.0:
        return 0.0
    gx = float(np.mean(np.abs(np.diff(data, axis=0))))
    gy = float(np.mean(np.abs(np.diff(data, axis=1))))
    denom = 0.5 * (gx + gy)
    return num / (denom + _Z_DISC_EPS)


_PLANE_AXES = {"xy": 2, "xz": 1, "yz": 0}


def plane_metrics(pred, ref, data_range: float = 1.0) -> list[tuple[str, str, float]]:
    """Per-plane mean PSNR/SSIM plus volume-level PSNR and z-discontinuity.

    Rows are (plane, metric, value); per-plane values are means of the
    per-slice metric over every slice of that plane.
    """
    pred_a = _as_array(pred)
    ref_a = _as_array(ref)
    if pred_a.shape != ref_a.shape:
        raise DimensionError(f"shape mismatch: {pred_a.shape} vs {ref_a.shape}")
    rows: list[tuple[str, str, float]] = []
    rows.append(("volume", "psnr", psnr(pred_a, ref_a, data_range)))
    rows.append(("volume", "z_discontinuity", z_discontinuity(pred_a)))
    for plane, axis in _PLANE_AXES.items():
        pred_s = np.moveaxis(pred_a, axis, 0)
        ref_s = np.moveaxis(ref_a, axis, 0)
        rows.append(
            (plane, "psnr",
             float(np.mean([psnr(p, q, data_range) for p, q in zip(pred_s, ref_s)])))
        )
        rows.append(
            (plane, "ssim",
             float(np.mean([ssim(p, q, data_range) for p, q in zip(pred_s, ref_s)])))
        )
    return rows
