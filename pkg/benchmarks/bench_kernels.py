#!/usr/bin/env python3
"""Time the numba kernels against the pure-numpy fallback.

Runs every hot kernel on training-sized inputs and prints a table, plus a
full fused training step under each backend (selected via GEODEPTH_NUMBA in
a subprocess, since the backend is fixed at import time).

    python3 benchmarks/bench_kernels.py            # kernel table + step bench
    python3 benchmarks/bench_kernels.py --kernels  # kernel table only
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from geodepth.kernels import numpy_backend

try:
    from geodepth.kernels import numba_backend
except ImportError:
    numba_backend = None

CONV_SHAPES = [
    # (n, ci, h, w, co, stride) on the default 64x48 / batch-4 pipeline
    (4, 4, 48, 64, 16, 2),
    (4, 16, 24, 32, 32, 2),
    (8, 8, 48, 64, 16, 2),
    (4, 128, 6, 8, 64, 1),
    (4, 64, 24, 32, 16, 1),
    (4, 16, 48, 64, 16, 1),
]


def timeit(fn, reps=30):
    fn()
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps


def bench_kernels():
    rng = np.random.default_rng(0)
    backends = [("numpy", numpy_backend)]
    if numba_backend is not None:
        backends.append(("numba", numba_backend))

    print(f"{'kernel':<42}" + "".join(f"{name:>12}" for name, _ in backends))
    for n, ci, h, w, co, s in CONV_SHAPES:
        x = rng.standard_normal((n, ci, h, w))
        wt = rng.standard_normal((co, ci, 3, 3))
        b = rng.standard_normal(co)
        dy = rng.standard_normal(numpy_backend.conv2d_forward(x, wt, b, s, 1).shape)
        label = f"conv {n}x{ci}x{h}x{w} -> {co} s{s} fwd+bwd"
        times = []
        for _, impl in backends:
            def full(impl=impl):
                _, cols = impl.conv2d_forward(x, wt, b, s, 1, return_cols=True)
                impl.conv2d_input_grad(dy, wt, s, 1, h, w)
                impl.conv2d_weight_grad(dy, cols, ci, 3, 3)
            times.append(timeit(full))
        print(f"{label:<42}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times))

    img = rng.random((8, 3, 48, 64))
    u = rng.uniform(0, 63, (8, 48, 64))
    v = rng.uniform(0, 47, (8, 48, 64))
    dout = rng.standard_normal((8, 3, 48, 64))
    times = []
    for _, impl in backends:
        def full(impl=impl):
            impl.bilinear_forward(img, u, v)
            impl.bilinear_backward(dout, img, u, v, False)
        times.append(timeit(full))
    print(f"{'bilinear 8x3x48x64 fwd+bwd':<42}"
          + "".join(f"{t * 1e3:>10.2f}ms" for t in times))

    x = rng.standard_normal((8, 3, 48, 64))
    times = [timeit(lambda impl=impl: impl.box_sum3(x)) for _, impl in backends]
    print(f"{'box_sum3 8x3x48x64':<42}"
          + "".join(f"{t * 1e3:>10.2f}ms" for t in times))


STEP_SNIPPET = r"""
import time
import numpy as np
from geodepth import autodiff as ad
from geodepth.kernels import backend_name
from geodepth.networks import *
from geodepth.objective import *
from geodepth.geometry import CameraIntrinsics
from geodepth.synthetic import generate_synthetic_sequence

K = CameraIntrinsics(60, 60, 32, 24, 64, 48)
dcfg = DepthNetConfig(); pcfg = PoseNetConfig()
dp = init_depth_params(dcfg, 0); pp = init_pose_params(pcfg, 0)
frames, _ = generate_synthetic_sequence(7, 6, "plane", K)
rgba = [np.concatenate([f, np.full((1, 48, 64), 0.5)]) for f in frames]
batch = (np.stack(rgba[0:4]), np.stack(rgba[1:5]), np.stack(rgba[2:6]))
weights = LossWeights()

def step():
    td = {k: ad.Tensor(v, True) for k, v in dp.items()}
    tp = {k: ad.Tensor(v, True) for k, v in pp.items()}
    loss, _, _ = compute_total_loss(batch, td, tp, K, weights, dcfg, pcfg)
    loss.backward()

step()
t0 = time.perf_counter()
for _ in range(10):
    step()
dt = (time.perf_counter() - t0) / 10
print(f"  {backend_name():<6} backend: {dt * 1e3:.0f} ms / training step (batch 4, 64x48)")
"""


def bench_step():
    print("\nfull loss forward+backward:")
    for flag in ("1", "0"):
        env = dict(os.environ, GEODEPTH_NUMBA=flag)
        subprocess.run([sys.executable, "-c", STEP_SNIPPET], env=env, check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kernels", action="store_true",
                        help="kernel table only, skip the step benchmark")
    args = parser.parse_args()
    bench_kernels()
    if not args.kernels:
        bench_step()


if __name__ == "__main__":
    main()
