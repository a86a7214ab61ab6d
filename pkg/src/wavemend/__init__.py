"""Restoration of motion-corrupted 3D volumes by wavelet-domain
mean-reverting diffusion with two orthogonal 2D noise predictors."""

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    NumericError,
    VolumeFileError,
)
from .metrics import plane_metrics, psnr, ssim, z_discontinuity
from .motion import PRESETS, MotionEvent, MotionSpec, corrupt, fft3, ifft3
from .phantom import ellipsoid_phantom
from .providers import (
    ExactInversionProvider,
    GaussianScoreProvider,
    NoiseProvider,
    NoiseStore,
    RecordingProvider,
    ReplayProvider,
    oracle_provider,
)
from .sampler import SamplerConfig, bench_sampler, choose_plane, restore, restore_2d_baseline
from .sde import (
    DEFAULT_LAMBDA,
    DEFAULT_T,
    NoiseSchedule,
    build_schedule,
    estimate_x0,
    forward_marginal,
    optimal_reverse,
    posterior_mean,
    posterior_step,
    schedule_from_json,
)
from .volume import Plane, Slice, Volume, get_slice, load_volume, put_slice, save_volume
from .wavelet import (
    SubbandImage,
    dwt2,
    identity_wtconv_weights,
    idwt2,
    receptive_field,
    stack_subbands,
    unstack_subbands,
    wtconv,
    wtconv_weight_count,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "DimensionError", "NumericError", "VolumeFileError",
    "plane_metrics", "psnr", "ssim", "z_discontinuity",
    "PRESETS", "MotionEvent", "MotionSpec", "corrupt", "fft3", "ifft3",
    "ellipsoid_phantom",
    "ExactInversionProvider", "GaussianScoreProvider", "NoiseProvider", "NoiseStore",
    "RecordingProvider", "ReplayProvider", "oracle_provider",
    "SamplerConfig", "bench_sampler", "choose_plane", "restore", "restore_2d_baseline",
    "DEFAULT_LAMBDA", "DEFAULT_T", "NoiseSchedule", "build_schedule", "estimate_x0",
    "forward_marginal", "optimal_reverse", "posterior_mean", "posterior_step",
    "schedule_from_json",
    "Plane", "Slice", "Volume", "get_slice", "load_volume", "put_slice", "save_volume",
    "SubbandImage", "dwt2", "identity_wtconv_weights", "idwt2", "receptive_field",
    "stack_subbands", "unstack_subbands", "wtconv", "wtconv_weight_count",
    "__version__",
]
