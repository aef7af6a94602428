"""Benchmark the compiled convolution kernels against the numpy fallback.

Runs the forward and both adjoint kernels over the layer shapes that
dominate training at the default and desk-scale configurations, prints a
per-shape table plus an end-to-end encoder training step comparison.

    python benchmarks/bench_kernels.py [--reps N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from aegan import autodiff as ad
from aegan import kernels
from aegan.kernels import _conv_numpy
from aegan.models import ArchitectureConfig, GeneratorNet, InverseGeneratorNet, sample_prior
from aegan.rng import Rng

# (label, batch, H, W, C, F): conv layers of the desk-scale (16px, f=16) and
# default (64px, f=64) ladders
SHAPES = [
    ("desk conv1", 64, 16, 16, 3, 16),
    ("desk conv2", 64, 8, 8, 16, 32),
    ("desk conv3", 64, 4, 4, 32, 64),
    ("desk conv4", 64, 2, 2, 64, 128),
    ("full conv1", 16, 64, 64, 3, 64),
    ("full conv2", 16, 32, 32, 64, 128),
]


def _time(fn, reps: int) -> float:
    fn()
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps * 1e3


def bench_shapes(reps: int) -> None:
    rng = np.random.default_rng(0)
    print(f"{'shape':12s} {'kernel':12s} {'compiled ms':>12s} {'numpy ms':>10s} {'speedup':>8s}")
    for label, b, h, w, c, f in SHAPES:
        x = rng.standard_normal((b, h, w, c)).astype(np.float32)
        k = rng.standard_normal((5, 5, c, f)).astype(np.float32)
        gy = rng.standard_normal((b, (h + 1) // 2, (w + 1) // 2, f)).astype(np.float32)
        rows = [
            ("forward",
             lambda: kernels.conv2d_forward(x, k, 2),
             lambda: _conv_numpy.conv2d_forward(x, k, 2)),
            ("grad_input",
             lambda: kernels.conv2d_grad_input(gy, k, h, w, 2),
             lambda: _conv_numpy.conv2d_grad_input(gy, k, h, w, 2)),
            ("grad_kernel",
             lambda: kernels.conv2d_grad_kernel(x, gy, 5, 5, 2),
             lambda: _conv_numpy.conv2d_grad_kernel(x, gy, 5, 5, 2)),
        ]
        for name, fast, slow in rows:
            if kernels.active_backend() != "compiled":
                print(f"{label:12s} {name:12s} {'(no ext)':>12s}")
                continue
            tc, tn = _time(fast, reps), _time(slow, reps)
            print(f"{label:12s} {name:12s} {tc:12.3f} {tn:10.3f} {tn / tc:7.2f}x")


def bench_training_step(reps: int) -> None:
    cfg = ArchitectureConfig(latent_dim=100, image_size=16, channels=3, base_width=16)
    gen = GeneratorNet(cfg, Rng(1)).freeze()
    enc = InverseGeneratorNet(cfg, Rng(2))
    z = sample_prior(Rng(3), 64, cfg.latent_dim)

    def step():
        x = gen(z, train=False)
        z_rec = enc(x, train=True)
        x_rec = gen(z_rec, train=False)
        loss = ad.bce_loss(x, x_rec)
        loss.backward()
        for p in enc.trainable_params():
            p.grad = None

    for mode in ("compiled", "numpy"):
        if mode == "compiled" and not kernels.HAVE_EXT:
            print("encoder training step: compiled extension not built")
            continue
        kernels._mode = mode if mode == "numpy" else "auto"
        print(f"encoder training step [{mode}]: {_time(step, reps):8.2f} ms")
    kernels._mode = "auto"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=30)
    args = parser.parse_args()
    print(f"active backend: {kernels.active_backend()}, threads: {kernels.get_num_threads()}")
    bench_shapes(args.reps)
    print()
    bench_training_step(max(5, args.reps // 3))


if __name__ == "__main__":
    main()
