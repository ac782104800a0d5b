"""PSNR metric and evaluation reports.

PSNR is computed on RGB in [0, 1] with peak 1.0 by default; a BT.601 luma
variant is available for comparability with Y-channel conventions.
Identical inputs give +inf, serialized as 99.99 dB in CSV output.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EvalError, ShapeError
from .media import bicubic_upscale
from .models import forward

CSV_PSNR_CAP = 99.99

_LUMA = np.array([0.299, 0.587, 0.114])


def psnr(ref, test, y_channel=False):
    ref = np.asarray(ref)
    test = np.asarray(test)
    if ref.shape != test.shape:
        raise ShapeError(f"psnr shapes differ: {ref.shape} vs {test.shape}")
    a = ref.astype(np.float64)
    b = test.astype(np.float64)
    if y_channel:
        a = a @ _LUMA
        b = b @ _LUMA
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


@dataclass
class EvalReport:
    mode: str
    scale: int
    per_chunk: list  # mean PSNR (dB) per chunk
    video_mean: float  # mean over all evaluated frames
    storage: "object" = None  # StorageReport, optional
    margins: list = field(default_factory=list)  # vs a baseline report

    def with_margins(self, baseline):
        self.margins = [
            ours - base for ours, base in zip(self.per_chunk, baseline.per_chunk)
        ]
        return self


def _frame_psnrs_for_chunk(shared, cafm, dataset, y_channel):
    vals = []
    for lr, hr in dataset.pairs:
        sr = forward(shared, cafm, lr, clamp=True)
        vals.append(psnr(hr, sr, y_channel=y_channel))
    return vals


def model_psnrs(shared, cafms, test_datasets, y_channel=False):
    """(per-chunk mean list, overall frame mean) for a shared+cafms model."""
    per_chunk = []
    all_frames = []
    for ds in test_datasets:
        cafm = None
        if cafms:
            if ds.chunk_index >= len(cafms):
                raise EvalError(
                    f"chunk {ds.chunk_index} has no modulation set (n={len(cafms)})"
                )
            cafm = cafms[ds.chunk_index]
        vals = _frame_psnrs_for_chunk(shared, cafm, ds, y_channel)
        per_chunk.append(float(np.mean(vals)))
        all_frames.extend(vals)
    return per_chunk, float(np.mean(all_frames))


def evaluate(model, test_datasets, mode="model", baseline=None, storage=None,
             y_channel=False):
    """EvalReport for a trained model or an unpacked bundle."""
    shared = model.shared
    cafms = getattr(model, "cafms", [])
    scale = shared.config.scale
    for ds in test_datasets:
        if ds.scale != scale:
            raise EvalError(
                f"dataset scale {ds.scale} does not match model scale {scale}"
            )
    per_chunk, mean = model_psnrs(shared, cafms, test_datasets, y_channel)
    report = EvalReport(mode=mode, scale=scale, per_chunk=per_chunk,
                        video_mean=mean, storage=storage)
    if baseline is not None:
        report.with_margins(baseline)
    return report


def evaluate_bicubic(test_datasets, y_channel=False):
    """Reference floor: plain bicubic upscaling of the LR frames."""
    per_chunk = []
    all_frames = []
    scale = test_datasets[0].scale
    for ds in test_datasets:
        vals = [
            psnr(hr, bicubic_upscale(lr, ds.scale), y_channel=y_channel)
            for lr, hr in ds.pairs
        ]
        per_chunk.append(float(np.mean(vals)))
        all_frames.extend(vals)
    return EvalReport(mode="bicubic", scale=scale, per_chunk=per_chunk,
                      video_mean=float(np.mean(all_frames)))


def _csv_db(value):
    if math.isinf(value):
        return CSV_PSNR_CAP
    return round(value, 4)


def write_report_csv(path, reports):
    """One row per (mode, chunk), mirroring the per-chunk result tables."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "mode", "scale", "chunk", "psnr_db", "video_mean_db",
            "margin_db", "storage_total_bytes",
        ])
        for rep in reports:
            for ci, val in enumerate(rep.per_chunk):
                margin = rep.margins[ci] if rep.margins else ""
                storage = rep.storage.total_bytes if rep.storage else ""
                writer.writerow([
                    rep.mode, rep.scale, ci, _csv_db(val),
                    _csv_db(rep.video_mean),
                    _csv_db(margin) if margin != "" else "",
                    storage,
                ])


def plot_psnr_vs_storage(path, reports):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for rep in reports:
        if rep.storage is None:
            continue
        ax.scatter(rep.storage.total_bytes / 1e6, rep.video_mean, label=rep.mode)
    ax.set_xlabel("storage (MB)")
    ax.set_ylabel("PSNR (dB)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
