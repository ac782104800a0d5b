"""Deterministic synthetic clips for demos, benchmarks, and tests.

Two visually distinct 16-frame segments: warm diagonal wood-grain stripes
with a circling highlight, then a cool counter-diagonal weave over a
vertical sweep. The stripe profiles carry phase-locked harmonics above
the downscaling cutoff, so plain interpolation blurs them while an
overfitting model can complete them from the visible fundamental; that
makes per-chunk adaptation measurable. Concatenated they form a natural
2-chunk video.
"""

import numpy as np

from .media import FRAME_DTYPE, VideoAsset


def _grid(size):
    y, x = np.meshgrid(
        np.linspace(0.0, 1.0, size, dtype=np.float64),
        np.linspace(0.0, 1.0, size, dtype=np.float64),
        indexing="ij",
    )
    return y, x


def _stripe_wave(theta):
    # sharp-edged profile: fundamental plus phase-locked harmonics
    return (np.sin(theta) + 0.45 * np.sin(2.0 * theta)
            + 0.3 * np.sin(4.0 * theta) + 0.18 * np.sin(6.0 * theta))


def gradient_frame(t, size=96):
    """Warm scene: diagonal grain stripes, soft gradient, moving blob."""
    y, x = _grid(size)
    theta = 2.0 * np.pi * ((x * 0.94 + y * 0.34) * size / 16.0 - 0.06 * t)
    tex = 0.23 * _stripe_wave(theta)
    base = 0.52 + 0.16 * np.sin(2.0 * np.pi * (x * 0.8 - y * 0.5 - 0.04 * t))
    cx = 0.5 + 0.3 * np.cos(2.0 * np.pi * t / 16.0)
    cy = 0.5 + 0.3 * np.sin(2.0 * np.pi * t / 16.0)
    blob = np.exp(-(((x - cx) ** 2 + (y - cy) ** 2) / 0.02))
    r = 0.80 * base + tex + 0.26 * blob
    g = 0.52 * base + 0.75 * tex + 0.18 * blob
    b = 0.33 * base + 0.45 * tex + 0.06 * blob
    frame = np.stack([r, g, b], axis=-1)
    return np.clip(frame, 0.0, 1.0).astype(FRAME_DTYPE)


def stripe_frame(t, size=96):
    """Cool scene: counter-diagonal weave over a vertical sweep."""
    y, x = _grid(size)
    theta = 2.0 * np.pi * ((y * 0.92 - x * 0.42) * size / 13.0 + 0.08 * t)
    tex = 0.21 * _stripe_wave(theta)
    chk_x = 2.0 * np.pi * (x * size / 18.0 + 0.05 * t)
    chk_y = 2.0 * np.pi * (y * size / 18.0 - 0.04 * t)
    checker = 0.16 * (np.sin(chk_x) * np.sin(chk_y)
                      + 0.5 * np.sin(2.0 * chk_x) * np.sin(2.0 * chk_y))
    sweep = 0.5 + 0.25 * np.cos(2.0 * np.pi * (y - 0.05 * t))
    r = 0.20 * tex + 0.25 * checker + 0.15 * sweep
    g = 0.75 * tex + 0.40 * checker + 0.28 * sweep
    b = 0.55 * tex + 0.25 * checker + 0.52 * sweep
    frame = np.stack([r, g, b], axis=-1)
    return np.clip(frame, 0.0, 1.0).astype(FRAME_DTYPE)


def two_scene_video(frames_per_scene=16, size=96, fps=30.0):
    frames = [gradient_frame(t, size) for t in range(frames_per_scene)]
    frames += [stripe_frame(t, size) for t in range(frames_per_scene)]
    return VideoAsset(frames=frames, fps=fps, source_id="synthetic-two-scene")


def write_frames(out_dir, video):
    import os

    from .media import write_frame_png

    os.makedirs(out_dir, exist_ok=True)
    for i, frame in enumerate(video.frames):
        write_frame_png(os.path.join(out_dir, "%06d.png" % i), frame)


def main(argv=None):
    import argparse

    parser = argparse.ArgumentParser(
        description="write the synthetic two-scene clip as PNG frames")
    parser.add_argument("out_dir")
    parser.add_argument("--frames-per-scene", type=int, default=16)
    parser.add_argument("--size", type=int, default=96)
    args = parser.parse_args(argv)
    video = two_scene_video(args.frames_per_scene, args.size)
    write_frames(args.out_dir, video)
    print(f"wrote {video.frame_count} frames to {args.out_dir}")


if __name__ == "__main__":
    main()
