"""Command-line entry point.

Every command is deterministic under --seed, echoes its effective
configuration next to its outputs (precedence: CLI flags > --config file >
defaults), and exits 0 only when all outputs were written.  Exit codes:
2 usage/configuration, 3 data, 4 numeric failure.
"""

from __future__ import annotations

import csv
import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from .errors import ConfigError, DataError, DimensionError, NumericError, VolumeFileError
from .metrics import plane_metrics
from .motion import PRESETS, MotionSpec, corrupt
from .phantom import ellipsoid_phantom
from .sampler import (
    DETERMINISTIC_MOD2,
    PROBABILISTIC,
    SamplerConfig,
    bench_sampler,
    restore,
    restore_2d_baseline,
)
from .sde import DEFAULT_LAMBDA, DEFAULT_T, build_schedule
from .volume import Plane, load_volume, save_volume

_PLANES = {"xy": Plane.XY, "xz": Plane.XZ}


def _resolve_config(defaults: dict, config_path, cli_values: dict) -> dict:
    """Merge defaults, a JSON config file, and explicitly-set CLI flags."""
    effective = dict(defaults)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {config_path} must hold a JSON object")
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise ConfigError(f"config file has unknown keys: {sorted(unknown)}")
        effective.update(loaded)
    effective.update({k: v for k, v in cli_values.items() if v is not None})
    return effective


def _echo_config(effective: dict, out_path) -> None:
    path = Path(str(out_path) + ".config.json")
    path.write_text(json.dumps(effective, indent=2, sort_keys=True) + "\n")


@click.group()
@click.version_option(package_name="wavemend")
def cli():
    """Motion-artifact simulation, training, and volume restoration."""


@cli.command("phantom")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--dims", default=None, help="Comma-separated d1,d2,d3 (default 32,32,32).")
@click.option("--count", type=int, default=None, help="Number of phantoms (default 1).")
@click.option("--ellipsoids", type=int, default=None, help="Ellipsoids per phantom (default 4).")
@click.option("--smooth", type=float, default=None, help="Gaussian smoothing sigma (default 1.0).")
@click.option("--seed", type=int, default=None)
@click.option("--prefix", default=None, help="Output file prefix (default 'phantom').")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def cmd_phantom(out_dir, config_path, **cli_values):
    """Generate ellipsoid phantom volumes as <prefix><i>.clean.vol files."""
    defaults = {"dims": "32,32,32", "count": 1, "ellipsoids": 4, "smooth": 1.0,
                "seed": 0, "prefix": "phantom"}
    cfg = _resolve_config(defaults, config_path, cli_values)
    dims = tuple(int(d) for d in str(cfg["dims"]).split(","))
    if len(dims) != 3:
        raise ConfigError(f"--dims must have three components, got {cfg['dims']!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(int(cfg["count"])):
        vol = ellipsoid_phantom(dims, n_ellipsoids=int(cfg["ellipsoids"]),
                                seed=int(cfg["seed"]) + i, smooth_sigma=float(cfg["smooth"]))
        save_volume(vol, out / f"{cfg['prefix']}{i:03d}.clean.vol")
    _echo_config(cfg, out / "phantom")
    click.echo(f"wrote {cfg['count']} phantom(s) to {out}")


@cli.command("simulate")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)
@click.option("--mmin", type=float, default=None)
@click.option("--mmax", type=float, default=None)
@click.option("--events", type=int, default=None, help="Number of motion events (default 3).")
@click.option("--max-translation", type=float, default=None, help="Voxels (default 3).")
@click.option("--max-rotation", type=float, default=None, help="Degrees (default 3).")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def cmd_simulate(in_path, out_path, config_path, **cli_values):
    """Corrupt a volume with synthetic k-space motion; writes a JSON report."""
    defaults = {"preset": None, "mmin": None, "mmax": None, "events": 3,
                "max_translation": 3.0, "max_rotation": 3.0, "seed": 0}
    cfg = _resolve_config(defaults, config_path, cli_values)
    if cfg["preset"] is not None:
        if cli_values.get("mmin") is not None or cli_values.get("mmax") is not None:
            raise ConfigError("--preset and --mmin/--mmax are mutually exclusive")
        cfg["mmin"], cfg["mmax"] = PRESETS[cfg["preset"]]
    if cfg["mmin"] is None or cfg["mmax"] is None:
        raise ConfigError("either --preset or both --mmin and --mmax are required")
    spec = MotionSpec(
        m_min=float(cfg["mmin"]),
        m_max=float(cfg["mmax"]),
        n_events=int(cfg["events"]),
        max_translation=float(cfg["max_translation"]),
        max_rotation=float(cfg["max_rotation"]),
        seed=int(cfg["seed"]),
    )
    vol = load_volume(in_path)
    corrupted, report = corrupt(vol, spec)
    if not np.all(np.isfinite(corrupted.data)):
        raise NumericError("corruption produced non-finite values")
    save_volume(corrupted, out_path)
    Path(str(out_path) + ".report.json").write_text(json.dumps(report, indent=2) + "\n")
    _echo_config(cfg, out_path)
    click.echo(
        f"corrupted {in_path} -> {out_path} "
        f"(fraction {report['realized_fraction']:.3f}, {len(report['events'])} events)"
    )


@cli.command("train")
@click.option("--data-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--plane", required=True, type=click.Choice(sorted(_PLANES)))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--steps", type=int, default=None, help="Optimisation steps (default 500).")
@click.option("--batch", type=int, default=None, help="Batch size (default 8).")
@click.option("--lr", type=float, default=None, help="Adam learning rate (default 1e-3).")
@click.option("--loss", type=click.Choice(["l1", "l2"]), default=None)
@click.option("--timesteps", type=int, default=None, help="Diffusion steps T (default 100).")
@click.option("--lam", type=float, default=None, help="Stationary noise scale (default 50/255).")
@click.option("--base-channels", type=int, default=None)
@click.option("--depth", type=int, default=None)
@click.option("--wt-levels", type=int, default=None)
@click.option("--kernel", type=int, default=None)
@click.option("--domain", type=click.Choice(["wavelet", "image"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def cmd_train(data_dir, plane, out_path, config_path, **cli_values):
    """Train one plane's denoiser on <id>.clean.vol / <id>.corrupt.vol pairs."""
    from .denoiser import build_denoiser, save_checkpoint
    from .training import TrainConfig, load_paired_volumes, make_slice_dataset, train, write_loss_csv

    defaults = {"steps": 500, "batch": 8, "lr": 1e-3, "loss": "l1",
                "timesteps": DEFAULT_T, "lam": DEFAULT_LAMBDA,
                "base_channels": 16, "depth": 1, "wt_levels": 2, "kernel": 3,
                "domain": "wavelet", "seed": 0}
    cfg = _resolve_config(defaults, config_path, cli_values)
    wavelet = cfg["domain"] == "wavelet"
    plane_enum = _PLANES[plane]
    pairs = load_paired_volumes(data_dir)
    x0_arr, mu_arr = make_slice_dataset(pairs, plane_enum, wavelet_domain=wavelet)
    sched = build_schedule(T=int(cfg["timesteps"]), lam=float(cfg["lam"]))
    net = build_denoiser(
        wavelet_domain=wavelet,
        base_channels=int(cfg["base_channels"]),
        depth=int(cfg["depth"]),
        wt_levels=int(cfg["wt_levels"]),
        kernel_size=int(cfg["kernel"]),
        seed=int(cfg["seed"]),
    )
    tcfg = TrainConfig(steps=int(cfg["steps"]), batch_size=int(cfg["batch"]),
                       lr=float(cfg["lr"]), loss_norm=cfg["loss"], seed=int(cfg["seed"]))
    history = train(net, x0_arr, mu_arr, sched, tcfg)
    save_checkpoint(out_path, net, plane_enum, sched, wavelet_domain=wavelet,
                    extra={"trained_steps": tcfg.steps, "loss_norm": tcfg.loss_norm,
                           "final_loss_smooth": history[-1][2]})
    write_loss_csv(history, str(out_path) + ".loss.csv")
    _echo_config(cfg, out_path)
    click.echo(
        f"trained {plane} net ({net.param_count} params, {len(pairs)} pairs, "
        f"{x0_arr.shape[0]} slices); final smoothed loss {history[-1][2]:.5g}"
    )


@cli.command("restore")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--ckpt-xy", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--ckpt-xz", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--mode", type=click.Choice(["pseudo3d", "2d"]), default=None)
@click.option("--oracle", "oracle_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Clean volume for the exact-inversion harness (bypasses checkpoints).")
@click.option("--alternation", type=click.Choice([DETERMINISTIC_MOD2, PROBABILISTIC]), default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--beta", type=float, default=None)
@click.option("--timesteps", type=int, default=None, help="Only with --oracle (default 100).")
@click.option("--lam", type=float, default=None, help="Only with --oracle (default 50/255).")
@click.option("--seed", type=int, default=None)
@click.option("--debug-every", type=int, default=None)
@click.option("--debug-dir", type=click.Path(file_okay=False), default=None)
@click.option("--threads", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
def cmd_restore(in_path, out_path, config_path, **cli_values):
    """Restore a corrupted volume; writes a timing summary JSON."""
    from .providers import ExactInversionProvider

    defaults = {"ckpt_xy": None, "ckpt_xz": None, "mode": "pseudo3d", "oracle_path": None,
                "alternation": DETERMINISTIC_MOD2, "alpha": 0.5, "beta": 0.5,
                "timesteps": DEFAULT_T, "lam": DEFAULT_LAMBDA, "seed": 0,
                "debug_every": None, "debug_dir": None, "threads": None}
    cfg = _resolve_config(defaults, config_path, cli_values)
    if cfg["threads"] is not None:
        import torch

        torch.set_num_threads(int(cfg["threads"]))
    corrupted = load_volume(in_path)
    wavelet = True
    if cfg["oracle_path"] is not None:
        sched = build_schedule(T=int(cfg["timesteps"]), lam=float(cfg["lam"]))
        clean = load_volume(cfg["oracle_path"])
        if clean.dims != corrupted.dims:
            raise DataError(
                f"oracle volume dims {clean.dims} != input dims {corrupted.dims}"
            )
        shared = ExactInversionProvider(clean, sched, wavelet_domain=True)
        providers = {Plane.XY: shared, Plane.XZ: shared}
    else:
        from .denoiser import DenoiserProvider, load_checkpoint, schedule_from_manifest

        if cfg["ckpt_xy"] is None:
            raise ConfigError("--ckpt-xy is required unless --oracle is given")
        if cfg["mode"] == "pseudo3d" and cfg["ckpt_xz"] is None:
            raise ConfigError("--ckpt-xz is required in pseudo3d mode")
        net_xy, man_xy = load_checkpoint(cfg["ckpt_xy"])
        if man_xy["plane"] != "xy":
            raise ConfigError(f"--ckpt-xy holds a {man_xy['plane']} net, expected xy")
        sched = schedule_from_manifest(man_xy)
        wavelet = bool(man_xy["wavelet_domain"])
        providers = {
            Plane.XY: DenoiserProvider(net_xy, sched, Plane.XY, wavelet_domain=wavelet)
        }
        if cfg["ckpt_xz"] is not None:
            net_xz, man_xz = load_checkpoint(cfg["ckpt_xz"])
            if man_xz["plane"] != "xz":
                raise ConfigError(f"--ckpt-xz holds a {man_xz['plane']} net, expected xz")
            if man_xz["schedule"] != man_xy["schedule"]:
                raise ConfigError("checkpoint schedules disagree between planes")
            if bool(man_xz["wavelet_domain"]) != wavelet:
                raise ConfigError("checkpoint domains (wavelet/image) disagree")
            providers[Plane.XZ] = DenoiserProvider(
                net_xz, sched, Plane.XZ, wavelet_domain=wavelet
            )

    step_times: list[float] = []
    sampler_cfg = SamplerConfig(
        alternation=cfg["alternation"],
        alpha=float(cfg["alpha"]),
        beta=float(cfg["beta"]),
        seed=int(cfg["seed"]),
        wavelet_domain=wavelet,
        progress=lambda t, plane, sec: step_times.append(sec),
        debug_dump_every=cfg["debug_every"],
        debug_dir=cfg["debug_dir"],
    )
    tic = time.perf_counter()
    if cfg["mode"] == "2d":
        result = restore_2d_baseline(corrupted, providers[Plane.XY], sched, sampler_cfg)
    else:
        result = restore(corrupted, providers, sched, sampler_cfg)
    total = time.perf_counter() - tic
    if not np.all(np.isfinite(result.data)):
        raise NumericError("restoration produced non-finite values")
    save_volume(result, out_path)
    timing = {
        "total_seconds": total,
        "steps": len(step_times),
        "per_step_mean_seconds": float(np.mean(step_times)) if step_times else 0.0,
        "wavelet_domain": wavelet,
        "mode": cfg["mode"],
    }
    Path(str(out_path) + ".timing.json").write_text(json.dumps(timing, indent=2) + "\n")
    _echo_config(cfg, out_path)
    click.echo(
        f"restored {in_path} -> {out_path} in {total:.1f}s "
        f"({timing['per_step_mean_seconds'] * 1e3:.1f} ms/step, wavelet={wavelet})"
    )


@cli.command("eval")
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ref", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--id", "volume_id", default=None, help="Label for the CSV rows.")
@click.option("--data-range", type=float, default=1.0)
def cmd_eval(pred, ref, out_path, volume_id, data_range):
    """Per-plane PSNR/SSIM and z-discontinuity of a prediction vs reference."""
    vid = volume_id if volume_id is not None else Path(pred).stem
    rows = plane_metrics(load_volume(pred), load_volume(ref), data_range=data_range)
    with Path(out_path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["volume_id", "plane", "metric", "value"])
        for plane, metric, value in rows:
            writer.writerow([vid, plane, metric, f"{value:.10g}"])
    click.echo(f"wrote {len(rows)} metric rows to {out_path}")


@cli.command("bench")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--sizes", default="240", help="Comma-separated slice sizes.")
@click.option("--modes", default="wavelet,image", help="Comma-separated: wavelet,image.")
@click.option("--steps", type=int, default=50)
@click.option("--base-channels", type=int, default=16)
@click.option("--depth", type=int, default=1)
@click.option("--seed", type=int, default=0)
def cmd_bench(out_path, sizes, modes, steps, base_channels, depth, seed):
    """Time the sampler per step with and without wavelet-domain execution."""
    size_list = [int(s) for s in sizes.split(",") if s]
    mode_list = [m.strip() for m in modes.split(",") if m.strip()]
    with Path(out_path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["slice_size", "mode", "steps", "mean_ms", "std_ms"])
        for size in size_list:
            for mode in mode_list:
                times = bench_sampler(size, mode, steps=steps,
                                      base_channels=base_channels, depth=depth, seed=seed)
                ms = 1e3 * np.asarray(times)
                writer.writerow([size, mode, len(times),
                                 f"{ms.mean():.3f}", f"{ms.std():.3f}"])
                click.echo(f"size {size} mode {mode}: {ms.mean():.1f} +- {ms.std():.1f} ms/step")
    click.echo(f"wrote benchmark table to {out_path}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.ClickException as exc:
        exc.show()
        return int(exc.exit_code)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        return 2
    except (VolumeFileError, DataError, DimensionError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 3
    except (NumericError, FloatingPointError) as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
