#!/usr/bin/env python3
"""Benchmark the numba kernel backend against the pure-numpy fallback.

Times the three convolution primitives plus a full training step (forward
+ backward on the tiny profile) under both backends and checks they agree
numerically. Select the default backend at runtime with CAFM_SR_KERNELS.

    python benchmarks/bench_kernels.py [--reps 50]
"""

import argparse
import time

import numpy as np

from cafm_sr import kernels, media, models, synthetic
from cafm_sr.models import run_backward, run_forward
from cafm_sr.modulation import make_identity_cafm


def _time(fn, reps):
    best = float("inf")
    for _ in range(3):
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        best = min(best, (time.perf_counter() - t0) / reps)
    return best * 1000.0


def bench_primitives(reps):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.standard_normal((8, 8, 24, 24)),
                             dtype=np.float32)
    w = rng.standard_normal((8, 8, 3, 3)).astype(np.float32)
    b = np.zeros(8, np.float32)
    gy = np.ascontiguousarray(rng.standard_normal((8, 8, 24, 24)),
                              dtype=np.float32)
    a = rng.standard_normal((8, 3, 3)).astype(np.float32)
    cases = {
        "conv_fwd": lambda: kernels.conv2d_forward(x, w, b),
        "conv_bwd_in": lambda: kernels.conv2d_backward_input(gy, w),
        "conv_bwd_w": lambda: kernels.conv2d_backward_weight(x, gy, 3, 3),
        "depthwise": lambda: kernels.depthwise_forward(x, a, b),
    }
    rows = {}
    for backend in kernels.available_backends():
        with kernels.use_backend(backend):
            for name, fn in cases.items():
                fn()  # warm the JIT
                rows.setdefault(name, {})[backend] = _time(fn, reps)
    return rows


def bench_step(reps):
    video = synthetic.two_scene_video()
    chunks = media.split_chunks(video, 2)
    train_ds, _ = media.build_datasets(video, chunks, 2)
    bc = models.tiny_config(2)
    params = models.build_backbone(bc, 0)
    cafm = make_identity_cafm(bc, 1)
    pairs = media.sample_patch_batch(train_ds[0], 8, 24, 0)
    xb = np.ascontiguousarray(np.stack([p[0] for p in pairs]).transpose(0, 3, 1, 2))
    yb = np.ascontiguousarray(np.stack([p[1] for p in pairs]).transpose(0, 3, 1, 2))

    def step():
        tape = []
        sr = run_forward(params, cafm, xb, tape=tape)
        gy = np.sign(sr - yb) / sr.size
        run_backward(params, cafm, tape, gy.astype(np.float32))
        return sr

    rows = {}
    outputs = {}
    for backend in kernels.available_backends():
        with kernels.use_backend(backend):
            outputs[backend] = step()
            rows[backend] = _time(step, max(reps // 4, 5))
    # backends differ only in f32 summation order; ~1e-5 absolute on
    # untrained-network activations spanning tens of units
    names = sorted(outputs)
    for i in range(1, len(names)):
        if not np.allclose(outputs[names[0]], outputs[names[i]],
                           rtol=1e-4, atol=1e-4):
            raise AssertionError(
                f"backends disagree: {names[0]} vs {names[i]}")
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=50)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} "
          f"(default: {kernels.backend_name()})")
    print()
    rows = bench_primitives(args.reps)
    width = max(len(n) for n in rows) + 2
    header = "".join(f"{b:>12}" for b in backends)
    print(f"{'primitive':<{width}}{header}   (ms/call)")
    for name, per in rows.items():
        cells = "".join(f"{per[b]:>12.3f}" for b in backends)
        print(f"{name:<{width}}{cells}")
    print()
    step_rows = bench_step(args.reps)
    cells = "".join(f"{step_rows[b]:>12.2f}" for b in backends)
    print(f"{'train_step':<{width}}{cells}   (ms/step, tiny profile)")
    fastest = min(step_rows, key=step_rows.get)
    others = [b for b in backends if b != fastest]
    for b in others:
        print(f"speedup {fastest} vs {b}: "
              f"{step_rows[b] / step_rows[fastest]:.2f}x")


if __name__ == "__main__":
    main()
