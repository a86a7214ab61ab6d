"""One-level orthonormal 2D Haar transform and the wavelet convolution.

The transform is normalised so that analysis is an orthogonal map: energy
is preserved exactly and the adjoint equals the inverse.  For each disjoint
2x2 block with ``a, b`` in the top row and ``c, d`` below:

    LL = (a + b + c + d) / 2      HL = (a + b - c - d) / 2
    LH = (a - b + c - d) / 2      HH = (a - b - c + d) / 2

i.e. the first letter is the filter along rows (axis 0), the second along
columns (axis 1).  White Gaussian noise keeps its variance under this map,
which is what lets diffusion steps run on subband stacks unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionError


@dataclass(frozen=True)
class SubbandImage:
    """Quadruple of subbands, each half the source resolution."""

    ll: np.ndarray
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray

    def __post_init__(self):
        shape = np.shape(self.ll)
        if len(shape) != 2:
            raise DimensionError(f"subbands must be 2D, got {len(shape)}D")
        for name in ("lh", "hl", "hh"):
            if np.shape(getattr(self, name)) != shape:
                raise DimensionError(
                    f"subband {name} shape {np.shape(getattr(self, name))} != LL shape {shape}"
                )

    @property
    def subbands(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (self.ll, self.lh, self.hl, self.hh)

    @property
    def source_shape(self) -> tuple[int, int]:
        h, w = np.shape(self.ll)
        return (2 * h, 2 * w)


def _check_even_2d(shape, what: str) -> None:
    if len(shape) < 2 or shape[-2] % 2 != 0 or shape[-1] % 2 != 0:
        raise DimensionError(f"{what} requires even spatial dims, got {tuple(shape)}")


def _dwt2_raw(x: np.ndarray):
    """Analysis on the last two axes; returns (ll, lh, hl, hh)."""
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    lh = (a - b + c - d) / 2.0
    hl = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    return ll, lh, hl, hh


def _idwt2_raw(ll, lh, hl, hh) -> np.ndarray:
    """Exact inverse of :func:`_dwt2_raw` on the last two axes."""
    shape = list(np.shape(ll))
    shape[-2] *= 2
    shape[-1] *= 2
    out = np.empty(shape, dtype=np.result_type(ll, lh, hl, hh, np.float64))
    out[..., 0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    out[..., 0::2, 1::2] = (ll - lh + hl - hh) / 2.0
    out[..., 1::2, 0::2] = (ll + lh - hl - hh) / 2.0
    out[..., 1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    return out


def dwt2(img: np.ndarray) -> SubbandImage:
    img = np.asarray(img)
    if img.ndim != 2:
        raise DimensionError(f"dwt2 expects a 2D field, got {img.ndim}D")
    _check_even_2d(img.shape, "dwt2")
    return SubbandImage(*_dwt2_raw(img.astype(np.float64, copy=False)))


def idwt2(sub: SubbandImage) -> np.ndarray:
    return _idwt2_raw(*sub.subbands)


def stack_subbands(sub: SubbandImage) -> np.ndarray:
    """Channel-stacked tensor of shape (4, H/2, W/2), order LL, LH, HL, HH."""
    return np.stack(sub.subbands, axis=0)


def unstack_subbands(img: np.ndarray) -> SubbandImage:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[0] != 4:
        raise DimensionError(f"expected a (4, h, w) stack, got shape {img.shape}")
    return SubbandImage(img[0], img[1], img[2], img[3])


def receptive_field(levels: int, kernel_size: int) -> int:
    """Effective receptive field of a cascaded wavelet convolution."""
    return (2 ** levels) * kernel_size


def wtconv_weight_count(levels: int, channels: int, kernel_size: int) -> int:
    """Number of stored depth-wise kernel entries: one k*k kernel per subband
    channel per level, four subband channels per input channel."""
    return levels * 4 * channels * kernel_size * kernel_size


def identity_wtconv_weights(levels: int, channels: int, kernel_size: int) -> np.ndarray:
    """Kernels with a centred 1, making wtconv the identity map."""
    if kernel_size % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {kernel_size}")
    w = np.zeros((levels, 4 * channels, kernel_size, kernel_size))
    w[:, :, kernel_size // 2, kernel_size // 2] = 1.0
    return w


def _depthwise_correlate(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    # Cross-correlation with zero padding, matching a stride-1 depth-wise conv.
    out = np.empty_like(x)
    for ch in range(x.shape[0]):
        ndimage.correlate(x[ch], kernels[ch], output=out[ch], mode="constant", cval=0.0)
    return out


def wtconv(x: np.ndarray, weights: np.ndarray, levels: int) -> np.ndarray:
    """Cascaded wavelet convolution.

    Each level transforms the (current) input, applies a depth-wise kernel to
    every subband channel, recurses on the convolved LL channels, and inverts
    the transform, so the output shape always equals the input shape.

    Parameters
    ----------
    x : (C, H, W) or (H, W) field with H, W divisible by ``2**levels``.
    weights : (levels, 4*C, k, k) depth-wise kernels, k odd; channel layout is
        subband-major: [LL of every channel, LH..., HL..., HH...].
    levels : number of cascaded transforms, >= 1.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3:
        raise DimensionError(f"wtconv expects (C, H, W) input, got shape {x.shape}")
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    c, h, w = x.shape
    if h % (2 ** levels) != 0 or w % (2 ** levels) != 0:
        raise DimensionError(
            f"spatial dims {(h, w)} must be divisible by 2**levels = {2 ** levels}"
        )
    weights = np.asarray(weights, dtype=np.float64)
    want = (levels, 4 * c, weights.shape[-1], weights.shape[-1])
    if weights.ndim != 4 or weights.shape != want or weights.shape[-1] % 2 != 1:
        raise ValueError(
            f"weights must have shape (levels, 4*C, k, k) with odd k = {want}, "
            f"got {weights.shape}"
        )

    out = _wtconv_level(x, weights, 0)
    return out[0] if squeeze else out


def _wtconv_level(x: np.ndarray, weights: np.ndarray, level: int) -> np.ndarray:
    c = x.shape[0]
    ll, lh, hl, hh = _dwt2_raw(x)
    stack = np.concatenate([ll, lh, hl, hh], axis=0)
    stack = _depthwise_correlate(stack, weights[level])
    if level + 1 < weights.shape[0]:
        stack = np.concatenate(
            [_wtconv_level(stack[:c], weights, level + 1), stack[c:]], axis=0
        )
    return _idwt2_raw(stack[:c], stack[c : 2 * c], stack[2 * c : 3 * c], stack[3 * c :])
