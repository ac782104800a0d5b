"""Video decoding, bicubic degradation, chunking, and dataset assembly.

Frames are H x W x 3 float32 arrays in [0, 1], RGB order. Low-resolution
counterparts are synthesized from the high-resolution frames with an
antialiased Catmull-Rom bicubic filter (a = -0.5), the convention used by
the reference training pipelines of the supported backbones.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DecodeError,
    EmptyInputError,
    InvalidChunkingError,
    InvalidPatchError,
    InvalidScaleError,
)

FRAME_DTYPE = np.float32
SUPPORTED_SCALES = (2, 3, 4)
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class VideoAsset:
    frames: list
    fps: float = 30.0
    source_id: str = ""

    def __post_init__(self):
        if not self.frames:
            raise EmptyInputError(f"no frames in video {self.source_id!r}")
        h, w = self.frames[0].shape[:2]
        for i, f in enumerate(self.frames):
            if f.shape != (h, w, 3):
                raise DecodeError(
                    f"frame {i} has shape {f.shape}, expected {(h, w, 3)}"
                )

    @property
    def frame_count(self):
        return len(self.frames)

    @property
    def height(self):
        return self.frames[0].shape[0]

    @property
    def width(self):
        return self.frames[0].shape[1]


@dataclass(frozen=True)
class ChunkSpec:
    chunk_index: int
    start: int
    end: int  # half-open

    def __len__(self):
        return self.end - self.start


@dataclass
class ChunkDataset:
    chunk_index: int
    pairs: list = field(repr=False)  # (lr, hr) frame tuples
    scale: int = 2
    role: str = "train"

    def __len__(self):
        return len(self.pairs)


# ---------------------------------------------------------------------------
# bicubic resampling


def _cubic(t):
    # Catmull-Rom family, a = -0.5
    at = np.abs(t)
    at2 = at * at
    at3 = at2 * at
    inner = 1.5 * at3 - 2.5 * at2 + 1.0
    outer = -0.5 * at3 + 2.5 * at2 - 4.0 * at + 2.0
    return np.where(at <= 1.0, inner, np.where(at < 2.0, outer, 0.0))


def _resample_weights(in_len, out_len, antialias):
    """Per-output tap indices and normalized weights for one axis."""
    scale = out_len / in_len
    kscale = min(scale, 1.0) if antialias else 1.0
    support = 2.0 / kscale
    u = (np.arange(out_len, dtype=np.float64) + 0.5) / scale - 0.5
    lo = np.floor(u - support).astype(np.int64) + 1
    ntaps = int(np.ceil(2.0 * support)) + 1
    taps = lo[:, None] + np.arange(ntaps)[None, :]
    w = _cubic((u[:, None] - taps) * kscale) * kscale
    w /= w.sum(axis=1, keepdims=True)
    idx = np.clip(taps, 0, in_len - 1)
    return idx, w


def _resample_axis(x, axis, idx, w):
    xt = np.take(x, idx, axis=axis)  # taps dim inserted after `axis`
    shape = [1] * xt.ndim
    shape[axis] = w.shape[0]
    shape[axis + 1] = w.shape[1]
    return (xt * w.reshape(shape)).sum(axis=axis + 1)


def resize_bicubic(x, out_h, out_w, antialias, h_axis=0, w_axis=1):
    """Resize along two axes of an arbitrary-rank array; float64 math."""
    y = x.astype(np.float64, copy=False)
    iy, wy = _resample_weights(x.shape[h_axis], out_h, antialias)
    ix, wx = _resample_weights(x.shape[w_axis], out_w, antialias)
    y = _resample_axis(y, h_axis, iy, wy)
    y = _resample_axis(y, w_axis, ix, wx)
    return y


def check_scale(s):
    if s not in SUPPORTED_SCALES:
        raise InvalidScaleError(f"scale must be one of {SUPPORTED_SCALES}, got {s}")


def center_crop_to_multiple(frame, s):
    h, w = frame.shape[:2]
    ch, cw = (h // s) * s, (w // s) * s
    top, left = (h - ch) // 2, (w - cw) // 2
    return frame[top:top + ch, left:left + cw]


def bicubic_downscale(frame, s):
    """HR frame -> LR frame at 1/s, center-cropped first if needed."""
    check_scale(s)
    frame = center_crop_to_multiple(frame, s)
    h, w = frame.shape[:2]
    lr = resize_bicubic(frame, h // s, w // s, antialias=True)
    return np.clip(lr, 0.0, 1.0).astype(FRAME_DTYPE)


def bicubic_upscale(frame, s):
    """LR frame -> HR-sized frame, classic 4-tap bicubic (no antialias)."""
    check_scale(s)
    h, w = frame.shape[:2]
    hr = resize_bicubic(frame, h * s, w * s, antialias=False)
    return np.clip(hr, 0.0, 1.0).astype(FRAME_DTYPE)


def bicubic_upscale_batch_nchw(x, s):
    """Upscale an (N, C, H, W) batch; clamped, dtype preserved."""
    y = resize_bicubic(x, x.shape[2] * s, x.shape[3] * s, antialias=False,
                       h_axis=2, w_axis=3)
    return np.clip(y, 0.0, 1.0).astype(x.dtype)


# ---------------------------------------------------------------------------
# decoding and caching


def _to_unit_rgb(img_bgr):
    rgb = img_bgr[:, :, ::-1]
    return (rgb.astype(FRAME_DTYPE) / 255.0).clip(0.0, 1.0)


def decode_frames(path, limit=None, fps_fallback=30.0):
    """Decode a video file or a directory of numbered image frames."""
    import cv2

    if not os.path.exists(path):
        raise DecodeError(f"input not found: {path}")
    frames = []
    fps = fps_fallback
    if os.path.isdir(path):
        names = sorted(
            f for f in os.listdir(path)
            if f.lower().endswith(IMAGE_EXTENSIONS)
        )
        if limit is not None:
            names = names[:limit]
        for name in names:
            img = cv2.imread(os.path.join(path, name), cv2.IMREAD_COLOR)
            if img is None:
                raise DecodeError(f"unreadable image frame: {name}")
            frames.append(_to_unit_rgb(img))
    else:
        cap = cv2.VideoCapture(path)
        if not cap.isOpened():
            raise DecodeError(f"cannot open video: {path}")
        cap_fps = cap.get(cv2.CAP_PROP_FPS)
        if cap_fps and cap_fps > 0:
            fps = float(cap_fps)
        while limit is None or len(frames) < limit:
            ok, img = cap.read()
            if not ok:
                break
            frames.append(_to_unit_rgb(img))
        cap.release()
    if not frames:
        raise EmptyInputError(f"no frames decoded from {path}")
    return VideoAsset(frames=frames, fps=fps, source_id=os.path.basename(path))


def write_frame_png(path, frame):
    import cv2

    img = np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)
    if not cv2.imwrite(path, img[:, :, ::-1]):
        raise DecodeError(f"failed to write {path}")


def read_frame_png(path):
    import cv2

    img = cv2.imread(path, cv2.IMREAD_COLOR)
    if img is None:
        raise DecodeError(f"unreadable cached frame: {path}")
    return _to_unit_rgb(img)


# ---------------------------------------------------------------------------
# chunking and datasets


def split_chunks(video, n):
    total = video.frame_count
    if not 1 <= n <= total:
        raise InvalidChunkingError(f"need 1 <= n <= {total}, got n={n}")
    base, rem = divmod(total, n)
    chunks = []
    start = 0
    for i in range(n):
        size = base + (1 if i < rem else 0)
        chunks.append(ChunkSpec(chunk_index=i, start=start, end=start + size))
        start += size
    return chunks


def build_datasets(video, chunks, s, test_stride=10):
    """Per-chunk train/test LR-HR pairs.

    Training keeps every frame; testing samples every test_stride-th frame
    of each chunk starting at offset 0. Overlap is intentional: models are
    trained to overfit the exact video they will reconstruct.
    """
    check_scale(s)
    train, test = [], []
    for chunk in chunks:
        pairs = []
        for fi in range(chunk.start, chunk.end):
            hr = center_crop_to_multiple(video.frames[fi], s)
            lr = bicubic_downscale(hr, s)
            pairs.append((lr, hr.astype(FRAME_DTYPE)))
        train.append(ChunkDataset(chunk.chunk_index, pairs, s, "train"))
        test_pairs = [pairs[i] for i in range(0, len(pairs), test_stride)]
        test.append(ChunkDataset(chunk.chunk_index, test_pairs, s, "test"))
    return train, test


def merge_datasets(datasets):
    """Union of several chunks into one dataset (whole-video training)."""
    pairs = [p for d in datasets for p in d.pairs]
    return ChunkDataset(-1, pairs, datasets[0].scale, datasets[0].role)


def sample_patch_batch(dataset, batch, patch_lr, rng_seed):
    """Aligned random LR/HR patch pairs; pure function of the seed."""
    s = dataset.scale
    lr0 = dataset.pairs[0][0]
    if patch_lr > lr0.shape[0] or patch_lr > lr0.shape[1]:
        raise InvalidPatchError(
            f"patch {patch_lr} exceeds LR frame {lr0.shape[:2]}"
        )
    rng = np.random.default_rng(rng_seed)
    out = []
    for _ in range(batch):
        fi = int(rng.integers(len(dataset.pairs)))
        lr, hr = dataset.pairs[fi]
        y = int(rng.integers(lr.shape[0] - patch_lr + 1))
        x = int(rng.integers(lr.shape[1] - patch_lr + 1))
        lp = lr[y:y + patch_lr, x:x + patch_lr]
        hp = hr[y * s:(y + patch_lr) * s, x * s:(x + patch_lr) * s]
        out.append((lp, hp))
    return out


# ---------------------------------------------------------------------------
# workdir layout


def prepare_workdir(video, s, n, workdir, test_stride=10):
    """Cache HR/LR frames as 8-bit PNGs and write the chunk manifest."""
    check_scale(s)
    chunks = split_chunks(video, n)
    hr_dir = os.path.join(workdir, "hr")
    lr_dir = os.path.join(workdir, f"lrx{s}")
    os.makedirs(hr_dir, exist_ok=True)
    os.makedirs(lr_dir, exist_ok=True)
    for fi, frame in enumerate(video.frames):
        hr = center_crop_to_multiple(frame, s)
        write_frame_png(os.path.join(hr_dir, "%06d.png" % fi), hr)
        write_frame_png(
            os.path.join(lr_dir, "%06d.png" % fi), bicubic_downscale(hr, s)
        )
    manifest = {
        "n": n,
        "scale": s,
        "test_stride": test_stride,
        "fps": video.fps,
        "ranges": [[c.start, c.end] for c in chunks],
    }
    with open(os.path.join(workdir, "chunks.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True)
    return manifest


def read_chunk_manifest(workdir):
    path = os.path.join(workdir, "chunks.json")
    if not os.path.exists(path):
        raise DecodeError(f"no chunk manifest in {workdir}")
    with open(path) as fh:
        return json.load(fh)


def load_cached_datasets(workdir):
    """Rebuild train/test datasets from a prepared workdir."""
    manifest = read_chunk_manifest(workdir)
    s = manifest["scale"]
    hr_dir = os.path.join(workdir, "hr")
    lr_dir = os.path.join(workdir, f"lrx{s}")
    train, test = [], []
    for ci, (start, end) in enumerate(manifest["ranges"]):
        pairs = []
        for fi in range(start, end):
            lr = read_frame_png(os.path.join(lr_dir, "%06d.png" % fi))
            hr = read_frame_png(os.path.join(hr_dir, "%06d.png" % fi))
            pairs.append((lr, hr))
        train.append(ChunkDataset(ci, pairs, s, "train"))
        stride = manifest["test_stride"]
        test.append(
            ChunkDataset(ci, [pairs[i] for i in range(0, len(pairs), stride)],
                         s, "test")
        )
    return train, test, manifest
