"""Trainable slice denoiser built from wavelet residual blocks.

The network predicts the diffusion noise of one slice from the stacked
channels of the noisy state, the corrupted condition, and one constant
time channel t/T.  Its residual blocks replace the middle convolution with
a cascaded wavelet convolution (depth-wise kernels on subband stacks),
which widens the receptive field exponentially in the number of cascade
levels while parameter count grows only linearly.

Two independent networks are trained, one per orthogonal plane; a saved
checkpoint is a one-line JSON manifest (architecture, plane id, schedule)
followed by the raw float32 parameter blob.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, DimensionError
from .providers import NoiseProvider
from .sde import NoiseSchedule, build_schedule
from .volume import Plane

CHECKPOINT_FORMAT = "wavemend-checkpoint"
CHECKPOINT_VERSION = 1


def haar_forward(x: torch.Tensor) -> torch.Tensor:
    """(B, C, H, W) -> (B, 4C, H/2, W/2), subband-major order LL, LH, HL, HH."""
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) / 2.0
    lh = (a - b + c - d) / 2.0
    hl = (a + b - c - d) / 2.0
    hh = (a - b - c + d) / 2.0
    return torch.cat([ll, lh, hl, hh], dim=1)


def haar_inverse(y: torch.Tensor) -> torch.Tensor:
    """Exact inverse of :func:`haar_forward`."""
    c = y.shape[1] // 4
    ll, lh, hl, hh = y[:, :c], y[:, c : 2 * c], y[:, 2 * c : 3 * c], y[:, 3 * c :]
    a = (ll + lh + hl + hh) / 2.0
    b = (ll - lh + hl - hh) / 2.0
    cc = (ll + lh - hl - hh) / 2.0
    d = (ll - lh - hl + hh) / 2.0
    n, ch, h, w = a.shape
    top = torch.stack([a, b], dim=-1).reshape(n, ch, h, 2 * w)
    bot = torch.stack([cc, d], dim=-1).reshape(n, ch, h, 2 * w)
    return torch.stack([top, bot], dim=-2).reshape(n, ch, 2 * h, 2 * w)


class WTConv2d(nn.Module):
    """Cascaded wavelet convolution: transform, depth-wise convolve all four
    subband stacks, recurse on the convolved LL channels, invert.  Shape
    preserving; spatial dims must be divisible by 2**levels."""

    def __init__(self, channels: int, kernel_size: int = 3, levels: int = 2):
        super().__init__()
        if kernel_size % 2 != 1:
            raise ValueError(f"kernel size must be odd, got {kernel_size}")
        if levels < 1:
            raise ValueError(f"levels must be >= 1, got {levels}")
        self.channels = channels
        self.kernel_size = kernel_size
        self.levels = levels
        weight = torch.empty(levels, 4 * channels, kernel_size, kernel_size)
        bound = 1.0 / kernel_size  # uniform over +-1/sqrt(fan_in), fan_in = k*k
        nn.init.uniform_(weight, -bound, bound)
        self.weight = nn.Parameter(weight)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        div = 2 ** self.levels
        if h % div != 0 or w % div != 0:
            raise DimensionError(
                f"spatial dims {(h, w)} must be divisible by {div} for {self.levels} levels"
            )
        return self._level(x, 0)

    def _level(self, x: torch.Tensor, level: int) -> torch.Tensor:
        c = self.channels
        y = haar_forward(x)
        y = F.conv2d(
            y,
            self.weight[level].unsqueeze(1),
            padding=self.kernel_size // 2,
            groups=4 * c,
        )
        if level + 1 < self.levels:
            y = torch.cat([self._level(y[:, :c], level + 1), y[:, c:]], dim=1)
        return haar_inverse(y)


class WaveletResidualBlock(nn.Module):
    """Conv -> SiLU -> WTConv -> SiLU -> Conv with an additive skip."""

    def __init__(self, channels: int, kernel_size: int = 3, wt_levels: int = 2):
        super().__init__()
        pad = kernel_size // 2
        self.conv_in = nn.Conv2d(channels, channels, kernel_size, padding=pad)
        self.wtconv = WTConv2d(channels, kernel_size, wt_levels)
        self.conv_out = nn.Conv2d(channels, channels, kernel_size, padding=pad)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.silu(self.conv_in(x))
        h = F.silu(self.wtconv(h))
        return x + self.conv_out(h)


class SliceDenoiser(nn.Module):
    """Small encoder/decoder of wavelet residual blocks.

    ``depth`` is the number of 2x down/up stages; inputs must have spatial
    dims divisible by ``2 ** (wt_levels + depth)``.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        base_channels: int = 16,
        depth: int = 1,
        wt_levels: int = 2,
        kernel_size: int = 3,
    ):
        super().__init__()
        if depth < 0:
            raise ValueError(f"depth must be >= 0, got {depth}")
        pad = kernel_size // 2
        self.arch = {
            "in_channels": in_channels,
            "out_channels": out_channels,
            "base_channels": base_channels,
            "depth": depth,
            "wt_levels": wt_levels,
            "kernel_size": kernel_size,
        }
        self.divisor = 2 ** (wt_levels + depth)
        self.stem = nn.Conv2d(in_channels, base_channels, kernel_size, padding=pad)
        ch = base_channels
        self.enc_blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        for _ in range(depth):
            self.enc_blocks.append(WaveletResidualBlock(ch, kernel_size, wt_levels))
            self.downs.append(nn.Conv2d(ch, 2 * ch, kernel_size, stride=2, padding=pad))
            ch *= 2
        self.mid = WaveletResidualBlock(ch, kernel_size, wt_levels)
        self.ups = nn.ModuleList()
        self.dec_blocks = nn.ModuleList()
        for _ in range(depth):
            self.ups.append(
                nn.Sequential(
                    nn.Upsample(scale_factor=2, mode="nearest"),
                    nn.Conv2d(ch, ch // 2, kernel_size, padding=pad),
                )
            )
            ch //= 2
            self.dec_blocks.append(WaveletResidualBlock(ch, kernel_size, wt_levels))
        self.head = nn.Conv2d(base_channels, out_channels, kernel_size, padding=pad)
        # Zero-initialised linear path from the raw inputs to the output.  The
        # late-step noise map is almost exactly linear in (state, condition);
        # a small nonlinear trunk alone cannot realise it precisely enough.
        self.input_skip = nn.Conv2d(in_channels, out_channels, 1, bias=False)
        nn.init.zeros_(self.input_skip.weight)

    @property
    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    @property
    def receptive_radius(self) -> int:
        """Conservative bound on how far one input pixel can influence."""
        k = self.arch["kernel_size"]
        lv = self.arch["wt_levels"]
        depth = self.arch["depth"]

        def wt_r(scale):
            return scale * ((k // 2) * 2 ** lv + 2 ** lv - 1)

        def block_r(scale):
            return 2 * scale * (k // 2) + wt_r(scale)

        r = k // 2  # stem
        scale = 1
        for _ in range(depth):
            r += block_r(scale)
            r += scale * (k // 2)  # down conv
            scale *= 2
        r += block_r(scale)  # mid
        for _ in range(depth):
            scale //= 2
            r += scale * (k // 2)  # up conv
            r += block_r(scale)
        r += k // 2  # head
        return r

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.arch["in_channels"]:
            raise DimensionError(
                f"expected (B, {self.arch['in_channels']}, H, W) input, got {tuple(x.shape)}"
            )
        h, w = x.shape[-2:]
        if h % self.divisor != 0 or w % self.divisor != 0:
            raise DimensionError(
                f"spatial dims {(h, w)} must be divisible by {self.divisor}"
            )
        out = self.stem(x)
        skips = []
        for block, down in zip(self.enc_blocks, self.downs):
            out = block(out)
            skips.append(out)
            out = down(out)
        out = self.mid(out)
        for up, block in zip(self.ups, self.dec_blocks):
            out = up(out)
            out = out + skips.pop()
            out = block(out)
        return self.head(out) + self.input_skip(x)


def build_denoiser(
    wavelet_domain: bool = True,
    base_channels: int = 16,
    depth: int = 1,
    wt_levels: int = 2,
    kernel_size: int = 3,
    seed: int = 0,
) -> SliceDenoiser:
    """Construct a denoiser with seeded initialisation.

    Wavelet-domain nets see 4 state + 4 condition + 1 time channel and emit
    4 noise channels; image-domain nets use 1 + 1 + 1 in and 1 out.
    """
    in_ch, out_ch = (9, 4) if wavelet_domain else (3, 1)
    torch.manual_seed(seed)
    return SliceDenoiser(in_ch, out_ch, base_channels, depth, wt_levels, kernel_size)


class DenoiserProvider(NoiseProvider):
    """Wraps a trained net as a slice noise provider for one plane."""

    def __init__(self, net: SliceDenoiser, sched: NoiseSchedule, plane: Plane,
                 wavelet_domain: bool = True):
        self.net = net.eval()
        self.sched = sched
        self.plane = plane
        self.wavelet_domain = wavelet_domain

    def predict(self, x, mu, t, plane, index=None):
        return self.predict_batch(
            np.asarray(x)[None], np.asarray(mu)[None], t, plane, [0 if index is None else index]
        )[0]

    def predict_batch(self, xs, mus, t, plane, indices):
        if plane is not self.plane:
            raise ConfigError(
                f"provider was trained for plane {self.plane.name}, asked for {plane.name}"
            )
        xs = np.asarray(xs, dtype=np.float32)
        mus = np.asarray(mus, dtype=np.float32)
        if xs.shape != mus.shape:
            raise DimensionError(f"state shape {xs.shape} != condition shape {mus.shape}")
        squeeze_channel = False
        if self.wavelet_domain:
            if xs.ndim != 4 or xs.shape[1] != 4:
                raise DimensionError(f"expected (N, 4, h, w) stacks, got {xs.shape}")
        else:
            if xs.ndim != 3:
                raise DimensionError(f"expected (N, H, W) slices, got {xs.shape}")
            xs = xs[:, None]
            mus = mus[:, None]
            squeeze_channel = True
        t = self.sched._check_step(t, lo=1)
        tchan = np.full((xs.shape[0], 1) + xs.shape[2:], t / self.sched.T, dtype=np.float32)
        inp = torch.from_numpy(np.concatenate([xs, mus, tchan], axis=1))
        with torch.no_grad():
            out = self.net(inp)
        out = out.numpy().astype(np.float64)
        return out[:, 0] if squeeze_channel else out


def _manifest_for(net: SliceDenoiser, plane: Plane, sched: NoiseSchedule,
                  wavelet_domain: bool, extra: dict | None) -> dict:
    arch_json = json.dumps(net.arch, sort_keys=True)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "plane": plane.name.lower(),
        "wavelet_domain": bool(wavelet_domain),
        "arch": net.arch,
        "arch_sha256": hashlib.sha256(arch_json.encode()).hexdigest(),
        "param_count": net.param_count,
        "schedule": {
            "T": sched.T,
            "lambda": sched.lam,
            "kind": sched.kind,
            "terminal_decay": sched.terminal_decay,
        },
        "tensors": [[name, list(p.shape)] for name, p in net.state_dict().items()],
    }
    if extra:
        manifest["extra"] = extra
    return manifest


def save_checkpoint(path, net: SliceDenoiser, plane: Plane, sched: NoiseSchedule,
                    wavelet_domain: bool = True, extra: dict | None = None) -> None:
    manifest = _manifest_for(net, plane, sched, wavelet_domain, extra)
    with Path(path).open("wb") as f:
        f.write((json.dumps(manifest) + "\n").encode("ascii"))
        for _, p in net.state_dict().items():
            f.write(p.detach().cpu().numpy().astype("<f4").tobytes())


def load_checkpoint(path) -> tuple[SliceDenoiser, dict]:
    path = Path(path)
    with path.open("rb") as f:
        line = f.readline()
        blob = f.read()
    try:
        manifest = json.loads(line.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: malformed checkpoint manifest: {exc}") from exc
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {manifest.get('version')}")
    net = SliceDenoiser(**manifest["arch"])
    state = {}
    offset = 0
    for name, shape in manifest["tensors"]:
        n = int(np.prod(shape)) if shape else 1
        chunk = blob[offset * 4 : (offset + n) * 4]
        if len(chunk) != n * 4:
            raise ConfigError(f"{path}: truncated parameter blob at tensor {name!r}")
        state[name] = torch.from_numpy(
            np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        )
        offset += n
    if offset * 4 != len(blob):
        raise ConfigError(
            f"{path}: parameter blob size mismatch: expected {offset * 4} bytes, got {len(blob)}"
        )
    net.load_state_dict(state)
    return net, manifest


def schedule_from_manifest(manifest: dict) -> NoiseSchedule:
    s = manifest["schedule"]
    return build_schedule(
        T=int(s["T"]),
        lam=float(s["lambda"]),
        kind=s.get("kind", "cosine"),
        terminal_decay=float(s.get("terminal_decay", 1e-5)),
    )
