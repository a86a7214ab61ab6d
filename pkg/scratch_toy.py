"""Prototype of the toy experiment to tune config (not part of the package)."""
import sys
import time

import numpy as np

import wavemend as wm
from wavemend.denoiser import DenoiserProvider, build_denoiser
from wavemend.training import TrainConfig, make_slice_dataset, train
from wavemend.volume import Plane

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 3000
lr = float(sys.argv[2]) if len(sys.argv) > 2 else 2e-3
base = int(sys.argv[3]) if len(sys.argv) > 3 else 16
n_ell = int(sys.argv[4]) if len(sys.argv) > 4 else 4

t0 = time.time()
lam = float(sys.argv[5]) if len(sys.argv) > 5 else wm.DEFAULT_LAMBDA
sched = wm.build_schedule(lam=lam)
pairs = []
for i in range(30):
    clean = wm.ellipsoid_phantom((32, 32, 32), n_ellipsoids=n_ell, seed=i)
    cor, _ = wm.corrupt(clean, wm.MotionSpec.preset("mild", seed=1000 + i))
    pairs.append((f"p{i:02d}", clean, cor))
train_pairs, test_pairs = pairs[:25], pairs[25:]
print(f"data ready {time.time()-t0:.1f}s")

nets = {}
for plane in (Plane.XY, Plane.XZ):
    x0_arr, mu_arr = make_slice_dataset(train_pairs, plane, wavelet_domain=True)
    net = build_denoiser(wavelet_domain=True, base_channels=base, depth=1, seed=42 + plane.value)
    tic = time.time()
    hist = train(net, x0_arr, mu_arr, sched, TrainConfig(steps=steps, lr=lr, batch_size=8, seed=plane.value))
    print(f"{plane.name}: {x0_arr.shape[0]} slices, {net.param_count} params, "
          f"{time.time()-tic:.0f}s, smooth loss {hist[9][2]:.5f} -> {hist[-1][2]:.5f}")
    nets[plane] = net

providers = {p: DenoiserProvider(nets[p], sched, p, wavelet_domain=True) for p in nets}

gains = {pl: [] for pl in ("xy", "xz", "yz")}
ssim_deltas = {pl: [] for pl in ("xy", "xz", "yz")}
for j, (vid, clean, cor) in enumerate(test_pairs):
    tic = time.time()
    out = wm.restore(cor, providers, sched, wm.SamplerConfig(seed=7000 + j))
    dt = time.time() - tic
    rows_out = {(p, m): v for p, m, v in wm.plane_metrics(out, clean)}
    rows_cor = {(p, m): v for p, m, v in wm.plane_metrics(cor, clean)}
    msg = [f"{vid} ({dt:.1f}s)"]
    for pl in ("xy", "xz", "yz"):
        dpsnr = rows_out[(pl, "psnr")] - rows_cor[(pl, "psnr")]
        dssim = rows_out[(pl, "ssim")] - rows_cor[(pl, "ssim")]
        gains[pl].append(dpsnr)
        ssim_deltas[pl].append(dssim)
        msg.append(f"{pl}: {rows_cor[(pl,'psnr')]:.1f}->{rows_out[(pl,'psnr')]:.1f} (+{dpsnr:.2f}dB, dssim {dssim:+.3f})")
    print("  ".join(msg))

print("\nmean gains:")
for pl in ("xy", "xz", "yz"):
    print(f"  {pl}: psnr +{np.mean(gains[pl]):.2f} dB, ssim {np.mean(ssim_deltas[pl]):+.4f}")
print(f"total {time.time()-t0:.0f}s")
