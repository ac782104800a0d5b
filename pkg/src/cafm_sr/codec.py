"""Bitrate-matched H.264/H.265 baseline via the system encoder.

The comparison protocol: pick a byte budget (normally the delivery
bundle plus LR media), drive the encoder's target bitrate with a short
binary search until the encoded file lands in [0.95, 1.0] x budget, then
score the decoded frames against the originals. Encoding is two-pass
average-bitrate with a pinned preset so runs are reproducible.
"""

import os
import shutil
import subprocess
import tempfile

import numpy as np

from .errors import DataError, EncoderMissingError, RateError
from .media import write_frame_png
from .metrics import EvalReport, psnr

ENCODER_LIB = {"h264": "libx264", "h265": "libx265"}
FLOOR_BPS = 1000
LOW_FRAC = 0.95
PRESET = "medium"


def find_encoder():
    return shutil.which("ffmpeg")


def encoder_available():
    return find_encoder() is not None


def match_rate(encode_fn, budget_bytes, initial_bps, probes=8):
    """Search encoder bitrates until the file size lands in
    [LOW_FRAC, 1.0] x budget.

    encode_fn(bps) -> (size_bytes, artifact). Returns (bps, size,
    artifact) of the accepted probe. Raises RateError when the budget sits
    below the codec's floor or the window cannot be hit within the probe
    limit.
    """
    lo = None  # feasible: (bps, size, artifact), size <= budget
    hi_bps = None  # infeasible bitrate (size > budget)
    bps = max(int(initial_bps), FLOOR_BPS)
    smallest = None
    for _ in range(probes):
        size, artifact = encode_fn(bps)
        if smallest is None or size < smallest[1]:
            smallest = (bps, size, artifact)
        if size > budget_bytes:
            hi_bps = bps
            if lo is not None:
                bps = (lo[0] + hi_bps) // 2
            elif bps <= FLOOR_BPS:
                break
            else:
                scaled = int(bps * budget_bytes / size * 0.9)
                bps = max(scaled, FLOOR_BPS)
        else:
            if lo is None or size > lo[1]:
                lo = (bps, size, artifact)
            if size >= LOW_FRAC * budget_bytes:
                return lo
            if hi_bps is None:
                bps = min(int(bps * budget_bytes / max(size, 1)), bps * 4)
            else:
                bps = (bps + hi_bps) // 2
    if lo is None:
        raise RateError(
            f"budget {budget_bytes} B is below the codec floor "
            f"({smallest[1]} B at {smallest[0]} bps)",
            floor_bytes=smallest[1])
    raise RateError(
        f"could not land within [{LOW_FRAC:.2f}, 1.00] x budget in "
        f"{probes} probes (best {lo[1]} B of {budget_bytes} B)",
        floor_bytes=smallest[1])


def _even_crop(frame):
    h, w = frame.shape[:2]
    return frame[:h - h % 2, :w - w % 2]


def _run_ffmpeg(args):
    proc = subprocess.run(args, stdout=subprocess.PIPE,
                          stderr=subprocess.PIPE)
    if proc.returncode != 0:
        err = proc.stderr.decode("utf-8", "replace")
        if "Unknown encoder" in err:
            raise EncoderMissingError(
                f"system ffmpeg lacks the requested encoder: {args}")
        raise DataError(f"encoder invocation failed: {' '.join(args)}\n{err}")
    return proc


def _decode_video(path):
    import cv2

    cap = cv2.VideoCapture(path)
    frames = []
    while True:
        ok, img = cap.read()
        if not ok:
            break
        frames.append((img[:, :, ::-1].astype(np.float32) / 255.0))
    cap.release()
    if not frames:
        raise DataError(f"decoded zero frames from {path}")
    return frames


def codec_baseline(video, budget_bytes, codec="h264", workdir=None,
                   probes=8, preset=PRESET, ranges=None, log=None):
    """Encode at a matched rate and report PSNR against the originals."""
    if codec not in ENCODER_LIB:
        raise DataError(f"unsupported codec {codec!r}")
    ffmpeg = find_encoder()
    if ffmpeg is None:
        raise EncoderMissingError("no ffmpeg on PATH; codec baseline needs a "
                                  "system encoder")
    frames = [_even_crop(f) for f in video.frames]
    tmp_root = workdir or tempfile.mkdtemp(prefix="codec_baseline_")
    frame_dir = os.path.join(tmp_root, "src_frames")
    os.makedirs(frame_dir, exist_ok=True)
    for i, frame in enumerate(frames):
        write_frame_png(os.path.join(frame_dir, "%06d.png" % i), frame)
    duration = len(frames) / video.fps
    lib = ENCODER_LIB[codec]
    passlog = os.path.join(tmp_root, "ffpass")

    def encode_fn(bps):
        out = os.path.join(tmp_root, f"probe_{bps}.mp4")
        base = [
            ffmpeg, "-y", "-framerate", f"{video.fps}",
            "-i", os.path.join(frame_dir, "%06d.png"),
            "-c:v", lib, "-b:v", str(bps), "-preset", preset,
            "-pix_fmt", "yuv420p",
        ]
        if lib == "libx265":
            base += ["-x265-params", "log-level=error"]
        pass1 = base + ["-pass", "1", "-passlogfile", passlog, "-an",
                        "-f", "null", os.devnull]
        pass2 = base + ["-pass", "2", "-passlogfile", passlog, out]
        if log is not None:
            log.append(pass1)
            log.append(pass2)
        _run_ffmpeg(pass1)
        _run_ffmpeg(pass2)
        return os.path.getsize(out), out

    bps, size, artifact = match_rate(
        encode_fn, budget_bytes, budget_bytes * 8 / duration, probes=probes)
    decoded = _decode_video(artifact)
    if len(decoded) != len(frames):
        raise DataError(
            f"decoded {len(decoded)} frames, expected {len(frames)}")
    vals = [psnr(ref, dec) for ref, dec in zip(frames, decoded)]
    if ranges:
        per_chunk = [
            float(np.mean(vals[start:end])) for start, end in ranges
        ]
    else:
        per_chunk = [float(np.mean(vals))]
    from .bundle import StorageReport

    storage = StorageReport(lr_video_bytes=size, shared_bytes=0,
                            per_chunk_cafm_bytes=[], total_bytes=size)
    return EvalReport(mode=codec, scale=1, per_chunk=per_chunk,
                      video_mean=float(np.mean(vals)), storage=storage)
