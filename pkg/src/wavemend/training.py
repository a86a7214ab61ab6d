"""Training of the slice denoisers, plus a finite-difference gradient check.

One optimisation step: draw slice pairs (clean, corrupted), a step index t,
and noise; form the forward-marginal state; predict the noise; rebuild the
reverse state through the closed-form posterior mean fed by the estimated
clean field; penalise its distance to the optimal reverse state computed
from the true clean field.  With a perfect noise prediction the two states
coincide and the loss is zero.  Gradients flow through the closed-form step
by reverse-mode differentiation.
"""

from __future__ import annotations

import copy
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import DataError
from .rng import STREAM_GRADCHECK, STREAM_TRAIN, substream
from .sde import NoiseSchedule
from .volume import Plane, Volume, load_volume
from .wavelet import _dwt2_raw


@dataclass
class TrainConfig:
    steps: int = 200
    batch_size: int = 8
    lr: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.99)
    loss_norm: str = "l1"  # "l1" or "l2"
    seed: int = 0
    smooth_halflife: int = 20  # EMA half-life, in steps, for the loss curve

    def __post_init__(self):
        if self.loss_norm not in ("l1", "l2"):
            raise ValueError(f"loss_norm must be 'l1' or 'l2', got {self.loss_norm!r}")


def load_paired_volumes(data_dir) -> list[tuple[str, Volume, Volume]]:
    """Load ``<id>.clean.vol`` / ``<id>.corrupt.vol`` pairs from a directory."""
    data_dir = Path(data_dir)
    cleans = sorted(data_dir.glob("*.clean.vol"))
    if not cleans:
        raise DataError(f"{data_dir}: no *.clean.vol files found")
    pairs = []
    dims = None
    for clean_path in cleans:
        vid = clean_path.name[: -len(".clean.vol")]
        corrupt_path = data_dir / f"{vid}.corrupt.vol"
        if not corrupt_path.exists():
            raise DataError(f"{data_dir}: missing corrupt volume for id {vid!r}")
        clean = load_volume(clean_path)
        corrupt = load_volume(corrupt_path)
        if clean.dims != corrupt.dims:
            raise DataError(
                f"{vid}: clean dims {clean.dims} != corrupt dims {corrupt.dims}"
            )
        if dims is None:
            dims = clean.dims
        elif clean.dims != dims:
            raise DataError(
                f"{vid}: dims {clean.dims} inconsistent with dataset dims {dims}"
            )
        pairs.append((vid, clean, corrupt))
    return pairs


def make_slice_dataset(
    pairs: list[tuple[str, Volume, Volume]], plane: Plane, wavelet_domain: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """All plane slices of every pair as (N, C, h, w) float32 arrays.

    Wavelet mode stacks the four subbands of each slice (C = 4); image mode
    keeps raw slices with a single channel.
    """
    axis = 2 if plane is Plane.XY else 1
    x0_parts, mu_parts = [], []
    for _, clean, corrupt in pairs:
        for vol, parts in ((clean, x0_parts), (corrupt, mu_parts)):
            imgs = np.moveaxis(vol.data.astype(np.float32), axis, 0)
            if wavelet_domain:
                parts.append(np.stack(_dwt2_raw(imgs), axis=1))
            else:
                parts.append(imgs[:, None])
    return np.concatenate(x0_parts, axis=0), np.concatenate(mu_parts, axis=0)


def _coeff_arrays(sched: NoiseSchedule) -> dict[str, np.ndarray]:
    n = sched.T + 1
    c1 = np.zeros(n)
    c2 = np.zeros(n)
    for t in range(1, n):
        c1[t], c2[t], _ = sched.posterior_coeffs(t)
    return {
        "decay": sched.decay.copy(),
        "sv": np.sqrt(sched.v),
        "c1": c1,
        "c2": c2,
    }


def batch_loss(
    net: torch.nn.Module,
    x0: torch.Tensor,
    mu: torch.Tensor,
    t_idx: np.ndarray,
    eps: torch.Tensor,
    sched: NoiseSchedule,
    norm: str = "l1",
) -> torch.Tensor:
    """Reverse-state mismatch for one batch.

    ``x0``/``mu``/``eps`` are (B, C, h, w) tensors and ``t_idx`` the per-
    sample step indices in [1, T].  The estimated clean field is left
    unclamped here so that every sample keeps a live gradient.
    """
    coeffs = _coeff_arrays(sched)

    def per_sample(name):
        vals = coeffs[name][t_idx]
        return torch.as_tensor(vals, dtype=x0.dtype).view(-1, 1, 1, 1)

    a = per_sample("decay")
    sv = per_sample("sv")
    c1 = per_sample("c1")
    c2 = per_sample("c2")
    x_t = mu + (x0 - mu) * a + sv * eps
    tchan = torch.as_tensor(
        t_idx / sched.T, dtype=x0.dtype
    ).view(-1, 1, 1, 1).expand(-1, 1, x0.shape[2], x0.shape[3])
    eps_hat = net(torch.cat([x_t, mu, tchan], dim=1))
    x0_hat = (x_t - mu - sv * eps_hat) / a + mu
    reversed_state = c1 * (x_t - mu) + c2 * (x0_hat - mu) + mu
    optimal_state = c1 * (x_t - mu) + c2 * (x0 - mu) + mu
    diff = reversed_state - optimal_state
    if norm == "l1":
        return diff.abs().mean()
    return (diff * diff).mean()


def _stratified_steps(T: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Step indices in [1, T], one per batch element, spread over the range.

    The per-step loss weight varies by orders of magnitude across t, so
    uniform independent draws make batch losses wildly uneven; stratifying
    keeps the marginal distribution uniform while every batch covers the
    whole range."""
    u = (np.arange(batch_size) + rng.random(batch_size)) / batch_size
    t_idx = np.minimum((u * T).astype(np.int64) + 1, T)
    return rng.permutation(t_idx)


def train(
    net: torch.nn.Module,
    x0_fields: np.ndarray,
    mu_fields: np.ndarray,
    sched: NoiseSchedule,
    cfg: TrainConfig,
) -> list[tuple[int, float, float]]:
    """Run Adam on the reverse-state loss; returns (step, loss, smoothed) rows.

    The smoothed column is an exponential moving average with half-life
    ``cfg.smooth_halflife`` steps; its trend is what smoke tests gate on.
    """
    if x0_fields.shape != mu_fields.shape:
        raise DataError(
            f"clean fields shape {x0_fields.shape} != corrupted shape {mu_fields.shape}"
        )
    if x0_fields.ndim != 4 or x0_fields.shape[0] == 0:
        raise DataError(f"expected a non-empty (N, C, h, w) dataset, got {x0_fields.shape}")
    n = x0_fields.shape[0]
    x0_all = torch.from_numpy(np.ascontiguousarray(x0_fields, dtype=np.float32))
    mu_all = torch.from_numpy(np.ascontiguousarray(mu_fields, dtype=np.float32))
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr, betas=cfg.adam_betas)
    rng = substream(cfg.seed, STREAM_TRAIN)
    ema_decay = 0.5 ** (1.0 / max(1, cfg.smooth_halflife))
    history: list[tuple[int, float, float]] = []
    smooth = None
    net.train()
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(0, n, size=cfg.batch_size)
        t_idx = _stratified_steps(sched.T, cfg.batch_size, rng)
        eps = torch.from_numpy(
            rng.standard_normal((cfg.batch_size,) + x0_fields.shape[1:]).astype(np.float32)
        )
        loss = batch_loss(
            net, x0_all[idx], mu_all[idx], t_idx, eps, sched, norm=cfg.loss_norm
        )
        opt.zero_grad()
        loss.backward()
        opt.step()
        val = float(loss.detach())
        smooth = val if smooth is None else ema_decay * smooth + (1.0 - ema_decay) * val
        history.append((step, val, smooth))
    net.eval()
    return history


def write_loss_csv(history: list[tuple[int, float, float]], path) -> None:
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "loss", "loss_smooth"])
        for step, loss, smooth in history:
            writer.writerow([step, f"{loss:.10g}", f"{smooth:.10g}"])


def grad_check(
    net: torch.nn.Module,
    x0_fields: np.ndarray,
    mu_fields: np.ndarray,
    sched: NoiseSchedule,
    norm: str = "l2",
    n_weights: int = 120,
    h: float = 1e-4,
    batch_size: int = 4,
    seed: int = 0,
) -> dict:
    """Compare autograd gradients of the training loss against central finite
    differences on a 64-bit copy of the net.

    Checks ``n_weights`` randomly chosen parameters on one fixed batch and
    reports the maximum relative error.
    """
    rng = substream(seed, STREAM_GRADCHECK)
    n = x0_fields.shape[0]
    idx = rng.integers(0, n, size=batch_size)
    t_idx = rng.integers(1, sched.T + 1, size=batch_size)
    eps = torch.from_numpy(
        rng.standard_normal((batch_size,) + x0_fields.shape[1:])
    )
    x0 = torch.from_numpy(np.ascontiguousarray(x0_fields[idx], dtype=np.float64))
    mu = torch.from_numpy(np.ascontiguousarray(mu_fields[idx], dtype=np.float64))

    net64 = copy.deepcopy(net).double()
    net64.eval()

    def loss_value() -> torch.Tensor:
        return batch_loss(net64, x0, mu, t_idx, eps, sched, norm=norm)

    loss = loss_value()
    net64.zero_grad()
    loss.backward()
    params = [p for p in net64.parameters()]
    grads = torch.cat([p.grad.reshape(-1) for p in params])
    flat_sizes = [p.numel() for p in params]
    total = int(sum(flat_sizes))
    n_checked = min(n_weights, total)
    picks = rng.choice(total, size=n_checked, replace=False)

    def locate(flat_index: int):
        for pi, size in enumerate(flat_sizes):
            if flat_index < size:
                return pi, flat_index
            flat_index -= size
        raise IndexError(flat_index)

    max_rel = 0.0
    rels = []
    with torch.no_grad():
        for flat_index in picks:
            pi, off = locate(int(flat_index))
            flat = params[pi].reshape(-1)
            orig = float(flat[off])
            flat[off] = orig + h
            plus = float(loss_value())
            flat[off] = orig - h
            minus = float(loss_value())
            flat[off] = orig
            fd = (plus - minus) / (2.0 * h)
            an = float(grads[int(flat_index)])
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
            rels.append(rel)
            max_rel = max(max_rel, rel)
    return {
        "max_rel_err": max_rel,
        "mean_rel_err": float(np.mean(rels)),
        "n_checked": n_checked,
        "h": h,
        "norm": norm,
        "param_count": total,
        "loss": float(loss.detach()),
    }
