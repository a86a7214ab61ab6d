"""Synthetic motion corruption of 3D volumes via Fourier-line replacement.

The simulator draws a fraction of phase-encode lines (the y axis, ordered
with DC centred), splits them into contiguous segments, and for each
segment replaces the corresponding k-space lines of the volume's spectrum
with those of a rigidly moved copy.  Rotations are resampled trilinearly in
image space; translations are exact Fourier phase ramps, so an integer
shift applied to every line reproduces a circular shift of the volume.

``corrupt`` is a pure function of (volume, spec): a fixed seed yields an
identical corruption, and a report of the realised events can be replayed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .volume import Volume

PRESETS = {
    "mild": (0.30, 0.45),
    "severe": (0.45, 0.50),
}


@dataclass(frozen=True)
class MotionSpec:
    m_min: float
    m_max: float
    n_events: int = 3
    max_translation: float = 3.0  # voxels
    max_rotation: float = 3.0  # degrees
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.m_min <= self.m_max <= 1.0:
            raise ConfigError(
                f"need 0 <= m_min <= m_max <= 1, got ({self.m_min}, {self.m_max})"
            )
        if self.n_events < 1:
            raise ConfigError(f"n_events must be >= 1, got {self.n_events}")
        if self.max_translation < 0 or self.max_rotation < 0:
            raise ConfigError("motion amplitude bounds must be >= 0")

    @classmethod
    def preset(cls, name: str, **kwargs) -> "MotionSpec":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        m_min, m_max = PRESETS[name]
        return cls(m_min=m_min, m_max=m_max, **kwargs)


@dataclass(frozen=True)
class MotionEvent:
    """One rigid-motion segment: half-open line range in centred ky order."""

    lines: tuple[int, int]
    translation: tuple[float, float, float]
    axis: tuple[float, float, float]
    angle_deg: float

    def to_dict(self) -> dict:
        return {
            "lines": list(self.lines),
            "translation": list(self.translation),
            "axis": list(self.axis),
            "angle_deg": self.angle_deg,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MotionEvent":
        return cls(
            lines=tuple(d["lines"]),
            translation=tuple(d["translation"]),
            axis=tuple(d["axis"]),
            angle_deg=float(d["angle_deg"]),
        )


def _as_data(vol) -> np.ndarray:
    return vol.data if isinstance(vol, Volume) else np.asarray(vol)


def fft3(vol) -> np.ndarray:
    """Unitary 3D FFT; DC at index [0, 0, 0]."""
    return np.fft.fftn(_as_data(vol).astype(np.float64), norm="ortho")


def ifft3(spec) -> np.ndarray:
    """Unitary inverse 3D FFT; returns the complex field."""
    return np.fft.ifftn(np.asarray(spec), norm="ortho")


def rotation_matrix(axis, angle_deg: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm == 0:
        raise ValueError("rotation axis must be non-zero")
    k = axis / norm
    th = math.radians(angle_deg)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return math.cos(th) * np.eye(3) + math.sin(th) * kx + (1 - math.cos(th)) * np.outer(k, k)


def rotate_volume(data: np.ndarray, axis, angle_deg: float) -> np.ndarray:
    """Trilinear rotation about the volume centre; outside is filled with 0."""
    rot = rotation_matrix(axis, angle_deg)
    center = (np.asarray(data.shape, dtype=np.float64) - 1.0) / 2.0
    inv = rot.T  # inverse of a rotation
    offset = center - inv @ center
    return ndimage.affine_transform(
        data.astype(np.float64), inv, offset=offset, order=1, mode="constant", cval=0.0
    )


def _phase_ramp(dims, delta) -> np.ndarray:
    """Spectrum multiplier shifting image content by ``delta`` voxels."""
    ramp = np.ones(dims, dtype=np.complex128)
    for ax, (d, sh) in enumerate(zip(dims, delta)):
        if sh == 0:
            continue
        freqs = np.fft.fftfreq(d)
        shape = [1, 1, 1]
        shape[ax] = d
        ramp = ramp * np.exp(-2j * np.pi * freqs * sh).reshape(shape)
    return ramp


def _centred_to_fft_indices(lo: int, hi: int, d: int) -> np.ndarray:
    return (np.arange(lo, hi) - d // 2) % d


def _draw_events(dims, spec: MotionSpec, rng: np.random.Generator) -> tuple[list[MotionEvent], float]:
    d2 = dims[1]
    f = float(rng.uniform(spec.m_min, spec.m_max))
    n_lines = int(round(f * d2))
    if n_lines == 0:
        if f > 0.0:
            raise ConfigError(
                f"drawn fraction {f:.4f} affects zero of {d2} lines; "
                "spec is degenerate for this volume size"
            )
        return [], f
    n_ev = min(spec.n_events, n_lines)
    sizes = np.full(n_ev, n_lines // n_ev)
    sizes[: n_lines % n_ev] += 1
    gaps = rng.multinomial(d2 - n_lines, np.full(n_ev + 1, 1.0 / (n_ev + 1)))
    events = []
    pos = 0
    for k in range(n_ev):
        pos += int(gaps[k])
        lo, hi = pos, pos + int(sizes[k])
        pos = hi
        translation = tuple(rng.uniform(-spec.max_translation, spec.max_translation, 3))
        axis = rng.normal(size=3)
        while np.linalg.norm(axis) < 1e-12:
            axis = rng.normal(size=3)
        axis = tuple(axis / np.linalg.norm(axis))
        angle = float(rng.uniform(-spec.max_rotation, spec.max_rotation))
        events.append(MotionEvent((lo, hi), translation, axis, angle))
    return events, f


def corrupt(
    vol: Volume,
    spec: MotionSpec,
    events: Optional[Sequence[MotionEvent]] = None,
) -> tuple[Volume, dict]:
    """Apply piecewise-constant rigid motion in k-space.

    Passing ``events`` replays a previous corruption instead of drawing a
    fresh one.  Returns the corrupted volume (real part, clamped to [0, 1])
    and a JSON-serialisable report of what was done.
    """
    dims = vol.dims
    if events is None:
        rng = np.random.default_rng(spec.seed)
        events, f = _draw_events(dims, spec, rng)
    else:
        events = list(events)
        f = sum(hi - lo for (lo, hi) in (e.lines for e in events)) / dims[1]
    report = {
        "m_min": spec.m_min,
        "m_max": spec.m_max,
        "seed": spec.seed,
        "realized_fraction": f,
        "n_lines": int(round(f * dims[1])),
        "encode_axis": "y",
        "line_ordering": "centred (DC at d2//2)",
        "real_part_taken": True,
        "output_clamp": [0.0, 1.0],
        "events": [e.to_dict() for e in events],
    }
    if not events:
        return Volume(np.array(vol.data)), report

    for lo, hi in (e.lines for e in events):
        if not 0 <= lo < hi <= dims[1]:
            raise ConfigError(f"event line range ({lo}, {hi}) outside [0, {dims[1]}]")

    base = fft3(vol)
    out_spec = base.copy()
    for event in events:
        if event.angle_deg != 0.0:
            moved = rotate_volume(vol.data, event.axis, event.angle_deg)
            spec_m = np.fft.fftn(moved, norm="ortho")
        else:
            spec_m = base
        if any(t != 0.0 for t in event.translation):
            spec_m = spec_m * _phase_ramp(dims, event.translation)
        cols = _centred_to_fft_indices(event.lines[0], event.lines[1], dims[1])
        out_spec[:, cols, :] = spec_m[:, cols, :]
    out = np.real(ifft3(out_spec))
    np.clip(out, 0.0, 1.0, out=out)
    return Volume(out.astype(np.float32)), report
