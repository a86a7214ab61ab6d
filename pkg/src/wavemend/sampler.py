"""Alternating-plane pseudo-3D reverse diffusion over volume slices.

The working volume is initialised by pushing the corrupted input to the
chain's terminal state (its own forward marginal at t = T with itself as
both start and mean).  Each step picks one orthogonal plane - XY on even
steps, XZ on odd under the deterministic rule, or at random with weights
(alpha, beta) - and updates every slice of that plane through one reverse
posterior step.  Per default the state, condition, noise prediction, and
posterior update all live on the four-subband stack of each slice at half
resolution; the image-domain path exists for ablation and benchmarking.

Within a step all slices are read from the frozen volume state and written
once, and every random draw comes from a substream keyed by
(step, plane, slice), so outputs are bit-reproducible for a fixed seed no
matter how slice work is batched.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Optional

import numpy as np

from .errors import ConfigError, DimensionError
from .providers import NoiseProvider
from .rng import STREAM_INIT, STREAM_PLANE, STREAM_STEP, substream
from .sde import NoiseSchedule, estimate_x0, posterior_step
from .volume import Plane, Volume, save_volume
from .wavelet import _dwt2_raw, _idwt2_raw

ProgressFn = Callable[[int, Plane, float], None]

DETERMINISTIC_MOD2 = "deterministic_mod2"
PROBABILISTIC = "probabilistic"


@dataclass(frozen=True)
class SamplerConfig:
    alternation: str = DETERMINISTIC_MOD2
    alpha: float = 0.5
    beta: float = 0.5
    x0_clamp: Optional[tuple[float, float]] = (-0.1, 1.1)
    seed: int = 0
    wavelet_domain: bool = True
    progress: Optional[ProgressFn] = field(default=None, compare=False)
    debug_dump_every: Optional[int] = None
    debug_dir: Optional[str] = None

    def __post_init__(self):
        if self.alternation not in (DETERMINISTIC_MOD2, PROBABILISTIC):
            raise ConfigError(f"unknown alternation mode {self.alternation!r}")
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ConfigError(f"plane weights must lie in [0, 1], got {(self.alpha, self.beta)}")
        if abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ConfigError(f"plane weights must sum to 1, got {self.alpha + self.beta}")
        if self.alternation == DETERMINISTIC_MOD2 and self.alpha != self.beta:
            raise ConfigError(
                "deterministic mod-2 alternation is the alpha = beta = 1/2 case; "
                "set probabilistic alternation for unequal weights"
            )
        if self.debug_dump_every is not None and self.debug_dir is None:
            raise ConfigError("debug_dump_every requires debug_dir")


def choose_plane(t: int, cfg: SamplerConfig, rng: np.random.Generator) -> Plane:
    """XY on even steps and XZ on odd ones, or a weighted coin flip."""
    if t < 1:
        raise ValueError(f"step t must be >= 1, got {t}")
    if cfg.alternation == DETERMINISTIC_MOD2:
        return Plane.XY if t % 2 == 0 else Plane.XZ
    return Plane.XY if rng.uniform() < cfg.alpha / (cfg.alpha + cfg.beta) else Plane.XZ


def _plane_view(data: np.ndarray, plane: Plane) -> np.ndarray:
    """(n_slices, H, W) view of the volume's sections for one plane."""
    return np.moveaxis(data, 2 if plane is Plane.XY else 1, 0)


def _to_stacks(imgs: np.ndarray) -> np.ndarray:
    return np.stack(_dwt2_raw(imgs), axis=1)


def _from_stacks(stacks: np.ndarray) -> np.ndarray:
    return _idwt2_raw(stacks[:, 0], stacks[:, 1], stacks[:, 2], stacks[:, 3])


def restore(
    v_corrupt: Volume,
    providers: Mapping[Plane, NoiseProvider] | NoiseProvider,
    sched: NoiseSchedule,
    cfg: SamplerConfig,
) -> Volume:
    """Reverse the corruption chain and return the restored volume.

    ``providers`` maps each plane to its noise predictor; a single provider
    is shared by both planes.  The returned volume is clamped to [0, 1].
    """
    if isinstance(providers, NoiseProvider):
        providers = {Plane.XY: providers, Plane.XZ: providers}
    mu_data = v_corrupt.data.astype(np.float64)
    rng_init = substream(cfg.seed, STREAM_INIT)
    state = mu_data + math.sqrt(sched.v[sched.T]) * rng_init.standard_normal(mu_data.shape)

    mu_cache: dict[Plane, np.ndarray] = {}

    def mu_fields(plane: Plane) -> np.ndarray:
        if plane not in mu_cache:
            imgs = np.array(_plane_view(mu_data, plane))
            mu_cache[plane] = _to_stacks(imgs) if cfg.wavelet_domain else imgs
        return mu_cache[plane]

    for t in range(sched.T, 0, -1):
        tic = time.perf_counter()
        plane = choose_plane(t, cfg, substream(cfg.seed, STREAM_PLANE, t))
        if plane not in providers:
            raise ConfigError(f"no provider configured for plane {plane.name}")
        provider = providers[plane]
        view = _plane_view(state, plane)
        imgs = np.array(view)
        xs = _to_stacks(imgs) if cfg.wavelet_domain else imgs
        mus = mu_fields(plane)
        n = xs.shape[0]
        eps_hat = np.asarray(
            provider.predict_batch(xs, mus, t, plane, np.arange(n)), dtype=np.float64
        )
        if eps_hat.shape != xs.shape:
            raise ConfigError(
                f"provider returned shape {eps_hat.shape}, expected {xs.shape}"
            )
        new_imgs = np.empty_like(imgs)
        for i in range(n):
            x0_hat = estimate_x0(xs[i], mus[i], eps_hat[i], t, sched, clamp=None)
            if cfg.x0_clamp is not None:
                if cfg.wavelet_domain:
                    img = _idwt2_raw(x0_hat[0], x0_hat[1], x0_hat[2], x0_hat[3])
                    np.clip(img, cfg.x0_clamp[0], cfg.x0_clamp[1], out=img)
                    x0_hat = np.stack(_dwt2_raw(img), axis=0)
                else:
                    x0_hat = np.clip(x0_hat, cfg.x0_clamp[0], cfg.x0_clamp[1])
            rng = substream(cfg.seed, STREAM_STEP, t, plane.value, i)
            prev = posterior_step(xs[i], x0_hat, mus[i], t, sched, rng)
            new_imgs[i] = (
                _idwt2_raw(prev[0], prev[1], prev[2], prev[3])
                if cfg.wavelet_domain
                else prev
            )
        view[:] = new_imgs
        elapsed = time.perf_counter() - tic
        if cfg.progress is not None:
            cfg.progress(t, plane, elapsed)
        if cfg.debug_dump_every is not None and t % cfg.debug_dump_every == 0:
            dump_dir = Path(cfg.debug_dir)
            dump_dir.mkdir(parents=True, exist_ok=True)
            save_volume(Volume(state.astype(np.float32)), dump_dir / f"state_t{t:04d}.vol")

    np.clip(state, 0.0, 1.0, out=state)
    return Volume(state.astype(np.float32))


def restore_2d_baseline(
    v_corrupt: Volume,
    provider_xy: NoiseProvider,
    sched: NoiseSchedule,
    cfg: SamplerConfig,
) -> Volume:
    """Ablation path: every step updates the XY plane only.

    Implemented as the probabilistic sampler with all weight on XY, so it
    shares the exact code path (and RNG consumption) of :func:`restore`.
    """
    cfg_2d = replace(cfg, alternation=PROBABILISTIC, alpha=1.0, beta=0.0)
    return restore(v_corrupt, {Plane.XY: provider_xy}, sched, cfg_2d)


def bench_sampler(
    slice_size: int,
    mode: str,
    steps: int = 50,
    base_channels: int = 16,
    depth: int = 1,
    seed: int = 0,
) -> list[float]:
    """Per-step wall times (seconds) of a 2D-path run over two slices of the
    given size, with a randomly initialised denoiser in the requested mode
    ('wavelet' or 'image')."""
    from .denoiser import DenoiserProvider, build_denoiser  # local: heavy import
    from .sde import build_schedule

    if mode not in ("wavelet", "image"):
        raise ConfigError(f"bench mode must be 'wavelet' or 'image', got {mode!r}")
    wavelet = mode == "wavelet"
    net = build_denoiser(
        wavelet_domain=wavelet, base_channels=base_channels, depth=depth, seed=seed
    )
    sched = build_schedule(T=steps)
    rng = substream(seed, STREAM_INIT, 9999)
    vol = Volume(rng.random((slice_size, slice_size, 2), dtype=np.float64).astype(np.float32))
    provider = DenoiserProvider(net, sched, Plane.XY, wavelet_domain=wavelet)
    times: list[float] = []
    cfg = SamplerConfig(
        seed=seed,
        wavelet_domain=wavelet,
        progress=lambda t, plane, sec: times.append(sec),
    )
    restore_2d_baseline(vol, provider, sched, cfg)
    return times
