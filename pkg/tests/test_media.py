"""Decoding, bicubic degradation, chunking, and patch sampling."""

import os

import numpy as np
import pytest

from cafm_sr import media
from cafm_sr.errors import (
    DecodeError,
    EmptyInputError,
    InvalidChunkingError,
    InvalidPatchError,
    InvalidScaleError,
)


# ---------------------------------------------------------------------------
# bicubic oracle: direct 2D evaluation of the cubic (a = -0.5) kernel


def _cubic_scalar(t):
    t = abs(t)
    if t <= 1.0:
        return 1.5 * t**3 - 2.5 * t**2 + 1.0
    if t < 2.0:
        return -0.5 * t**3 + 2.5 * t**2 - 4.0 * t + 2.0
    return 0.0


def bicubic_reference(img, out_h, out_w, antialias):
    """Brute-force per-pixel 2D convolution with clamped edge indices."""
    in_h, in_w = img.shape[:2]
    sy, sx = out_h / in_h, out_w / in_w
    ky = min(sy, 1.0) if antialias else 1.0
    kx = min(sx, 1.0) if antialias else 1.0
    out = np.zeros((out_h, out_w) + img.shape[2:], dtype=np.float64)
    for i in range(out_h):
        u = (i + 0.5) / sy - 0.5
        jy = range(int(np.floor(u - 2.0 / ky)) - 1,
                   int(np.ceil(u + 2.0 / ky)) + 2)
        for j in range(out_w):
            v = (j + 0.5) / sx - 0.5
            jx = range(int(np.floor(v - 2.0 / kx)) - 1,
                       int(np.ceil(v + 2.0 / kx)) + 2)
            acc = 0.0
            total = 0.0
            for yy in jy:
                wy = _cubic_scalar((u - yy) * ky) * ky
                if wy == 0.0:
                    continue
                yc = min(max(yy, 0), in_h - 1)
                for xx in jx:
                    wx = _cubic_scalar((v - xx) * kx) * kx
                    if wx == 0.0:
                        continue
                    xc = min(max(xx, 0), in_w - 1)
                    acc = acc + wy * wx * img[yc, xc]
                    total += wy * wx
            out[i, j] = acc / total
    return out


def test_bicubic_constant_preserved():
    frame = np.full((8, 8, 3), 0.5, dtype=np.float32)
    lr = media.bicubic_downscale(frame, 2)
    assert lr.shape == (4, 4, 3)
    assert np.allclose(lr, 0.5, atol=1e-6)


def test_bicubic_ramp_matches_reference_oracle():
    ramp = np.linspace(0.0, 1.0, 8, dtype=np.float64)
    frame = np.broadcast_to(ramp[None, :, None], (8, 8, 3)).copy()
    got = media.resize_bicubic(frame, 4, 4, antialias=True)
    ref = bicubic_reference(frame, 4, 4, antialias=True)
    assert np.abs(got - ref).max() < 1e-6


@pytest.mark.parametrize("shape,out,antialias", [
    ((9, 12), (3, 4), True),
    ((6, 6), (12, 12), False),
    ((10, 7), (5, 21), True),
])
def test_bicubic_random_matches_reference_oracle(shape, out, antialias):
    rng = np.random.default_rng(4)
    img = rng.random(shape)
    got = media.resize_bicubic(img, out[0], out[1], antialias)
    ref = bicubic_reference(img, out[0], out[1], antialias)
    assert np.abs(got - ref).max() < 1e-9


def test_bicubic_crops_non_divisible_frames():
    frame = np.random.default_rng(0).random((9, 8, 3)).astype(np.float32)
    lr = media.bicubic_downscale(frame, 2)
    assert lr.shape == (4, 4, 3)


def test_bicubic_invalid_scale():
    frame = np.zeros((8, 8, 3), dtype=np.float32)
    with pytest.raises(InvalidScaleError):
        media.bicubic_downscale(frame, 5)


def test_bicubic_commutes_with_affine_maps():
    rng = np.random.default_rng(9)
    frame = (0.2 + 0.5 * rng.random((12, 12, 3))).astype(np.float32)
    a, b = 0.5, 0.2  # keeps values inside [0, 1]: no clamping interference
    lhs = media.bicubic_downscale((a * frame + b).astype(np.float32), 3)
    rhs = a * media.bicubic_downscale(frame, 3) + b
    assert np.abs(lhs - rhs.astype(np.float32)).max() < 1e-5


def test_downscale_of_nearest_upscaled_constant_is_identity():
    frame = np.full((4, 4, 3), 0.25, dtype=np.float32)
    up = np.repeat(np.repeat(frame, 2, axis=0), 2, axis=1)
    down = media.bicubic_downscale(up, 2)
    assert np.allclose(down, frame, atol=1e-6)


# ---------------------------------------------------------------------------
# decoding


def _write_frames(tmp_path, count, size=6, value=None):
    rng = np.random.default_rng(1)
    for i in range(count):
        frame = (np.full((size, size, 3), value, dtype=np.float32)
                 if value is not None else
                 rng.random((size, size, 3), dtype=np.float64).astype(np.float32))
        media.write_frame_png(str(tmp_path / ("%06d.png" % i)), frame)


def test_decode_directory_with_limit(tmp_path):
    _write_frames(tmp_path, 30)
    video = media.decode_frames(str(tmp_path), limit=10)
    assert video.frame_count == 10
    assert video.frames[0].dtype == np.float32


def test_decode_solid_gray_frame(tmp_path):
    _write_frames(tmp_path, 1, value=0.5)
    video = media.decode_frames(str(tmp_path))
    assert video.frame_count == 1
    frame = video.frames[0]
    assert frame.min() == frame.max()
    assert abs(float(frame[0, 0, 0]) - 0.5) <= 0.51 / 255


def test_decode_corrupt_file(tmp_path):
    (tmp_path / "000000.png").write_text("this is not an image")
    with pytest.raises(DecodeError):
        media.decode_frames(str(tmp_path))


def test_decode_missing_and_empty(tmp_path):
    with pytest.raises(DecodeError):
        media.decode_frames(str(tmp_path / "nope"))
    os.makedirs(tmp_path / "empty")
    with pytest.raises(EmptyInputError):
        media.decode_frames(str(tmp_path / "empty"))


# ---------------------------------------------------------------------------
# chunking


def test_split_chunks_examples():
    video = media.VideoAsset([np.zeros((2, 2, 3), np.float32)] * 300)
    spans = [(c.start, c.end) for c in media.split_chunks(video, 3)]
    assert spans == [(0, 100), (100, 200), (200, 300)]

    video = media.VideoAsset([np.zeros((2, 2, 3), np.float32)] * 10)
    spans = [(c.start, c.end) for c in media.split_chunks(video, 3)]
    assert spans == [(0, 4), (4, 7), (7, 10)]

    video = media.VideoAsset([np.zeros((2, 2, 3), np.float32)] * 5)
    spans = [(c.start, c.end) for c in media.split_chunks(video, 5)]
    assert spans == [(i, i + 1) for i in range(5)]


def test_split_chunks_partition_property_exhaustive():
    for total in range(1, 33):
        video = media.VideoAsset([np.zeros((1, 1, 3), np.float32)] * total)
        for n in range(1, total + 1):
            chunks = media.split_chunks(video, n)
            covered = [f for c in chunks for f in range(c.start, c.end)]
            assert covered == list(range(total)), (total, n)
            assert all(len(c) >= 1 for c in chunks)


def test_split_chunks_invalid():
    video = media.VideoAsset([np.zeros((1, 1, 3), np.float32)] * 4)
    for n in (0, 5, -1):
        with pytest.raises(InvalidChunkingError):
            media.split_chunks(video, n)


def test_build_datasets_stride():
    frames = [np.full((4, 4, 3), i / 101, dtype=np.float32)
              for i in range(100)]
    video = media.VideoAsset(frames)
    chunks = media.split_chunks(video, 1)
    train, test = media.build_datasets(video, chunks, 2, test_stride=10)
    assert len(train[0]) == 100
    assert len(test[0]) == 10
    # offset 0: test frames are frames 0, 10, ..., 90
    for k, (lr, hr) in enumerate(test[0].pairs):
        assert np.allclose(hr, frames[10 * k][:4, :4], atol=1e-6)

    _, test1 = media.build_datasets(video, chunks, 2, test_stride=1)
    assert len(test1[0]) == 100

    short = media.VideoAsset(frames[:5])
    schunks = media.split_chunks(short, 1)
    _, stest = media.build_datasets(short, schunks, 2, test_stride=10)
    assert len(stest[0]) == 1


# ---------------------------------------------------------------------------
# patch sampling


def _coordinate_dataset(s=2, h=8, w=8):
    lr = np.zeros((h, w, 3), dtype=np.float32)
    hr = np.zeros((h * s, w * s, 3), dtype=np.float32)
    lr[:, :, 0] = (np.arange(h) / h)[:, None]
    lr[:, :, 1] = (np.arange(w) / w)[None, :]
    hr[:, :, 0] = (np.arange(h * s) / (h * s))[:, None]
    hr[:, :, 1] = (np.arange(w * s) / (w * s))[None, :]
    return media.ChunkDataset(0, [(lr, hr)], s, "train")


def test_patch_sampling_deterministic():
    ds = _coordinate_dataset()
    a = media.sample_patch_batch(ds, 4, 4, rng_seed=7)
    b = media.sample_patch_batch(ds, 4, 4, rng_seed=7)
    for (la, ha), (lb, hb) in zip(a, b):
        assert np.array_equal(la, lb) and np.array_equal(ha, hb)
    c = media.sample_patch_batch(ds, 4, 4, rng_seed=8)
    assert any(not np.array_equal(x[0], y[0]) for x, y in zip(a, c))


def test_patch_alignment():
    s, h, w = 2, 8, 8
    ds = _coordinate_dataset(s, h, w)
    for seed in range(20):
        for lp, hp in media.sample_patch_batch(ds, 2, 3, rng_seed=seed):
            assert lp.shape == (3, 3, 3) and hp.shape == (6, 6, 3)
            ly = round(float(lp[0, 0, 0]) * h)
            lx = round(float(lp[0, 0, 1]) * w)
            hy = round(float(hp[0, 0, 0]) * h * s)
            hx = round(float(hp[0, 0, 1]) * w * s)
            assert (hy, hx) == (s * ly, s * lx)


def test_patch_constant_video():
    lr = np.full((6, 6, 3), 0.5, dtype=np.float32)
    hr = np.full((12, 12, 3), 0.5, dtype=np.float32)
    ds = media.ChunkDataset(0, [(lr, hr)], 2, "train")
    for lp, hp in media.sample_patch_batch(ds, 3, 4, rng_seed=0):
        assert np.all(lp == 0.5) and np.all(hp == 0.5)


def test_patch_hr_size_follows_scale():
    rng = np.random.default_rng(0)
    lr = rng.random((48, 48, 3)).astype(np.float32)
    hr = rng.random((96, 96, 3)).astype(np.float32)
    ds = media.ChunkDataset(0, [(lr, hr)], 2, "train")
    (lp, hp), = media.sample_patch_batch(ds, 1, 48, rng_seed=1)
    assert lp.shape == (48, 48, 3) and hp.shape == (96, 96, 3)


def test_patch_too_large():
    ds = _coordinate_dataset()
    with pytest.raises(InvalidPatchError):
        media.sample_patch_batch(ds, 1, 9, rng_seed=0)


# ---------------------------------------------------------------------------
# workdir cache


def test_prepare_and_reload_workdir(tmp_path, small_video):
    manifest = media.prepare_workdir(small_video, 2, 2, str(tmp_path),
                                     test_stride=4)
    assert manifest["ranges"] == [[0, 4], [4, 8]]
    assert os.path.exists(tmp_path / "chunks.json")
    assert len(os.listdir(tmp_path / "hr")) == 8
    assert len(os.listdir(tmp_path / "lrx2")) == 8
    train, test, loaded = media.load_cached_datasets(str(tmp_path))
    assert loaded["n"] == 2 and loaded["scale"] == 2
    assert [len(d) for d in train] == [4, 4]
    assert [len(d) for d in test] == [1, 1]
    # 8-bit cache: values within half a quantization step
    lr, hr = train[0].pairs[0]
    direct = media.bicubic_downscale(
        media.center_crop_to_multiple(small_video.frames[0], 2), 2)
    assert np.abs(lr - direct).max() <= 0.5 / 255 + 1e-6
    assert hr.shape == (32, 32, 3)
