"""PSNR exactness and report plumbing."""

import csv
import math

import numpy as np
import pytest

from cafm_sr import media, metrics, models, training
from cafm_sr.errors import EvalError, ShapeError
from cafm_sr.metrics import (
    EvalReport,
    evaluate,
    evaluate_bicubic,
    psnr,
    write_report_csv,
)


def test_psnr_identical_is_inf():
    rng = np.random.default_rng(0)
    frame = rng.random((6, 6, 3)).astype(np.float32)
    assert math.isinf(psnr(frame, frame))


def test_psnr_uniform_error_closed_form():
    ref = np.full((16, 16, 3), 0.4, dtype=np.float64)
    test = ref + 1.0 / 255.0
    expected = 20.0 * math.log10(255.0)
    assert abs(psnr(ref, test) - expected) < 0.01


def test_psnr_matches_bruteforce_mse():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = rng.random((5, 7, 3))
        b = rng.random((5, 7, 3))
        acc = 0.0
        n = 0
        for idx in np.ndindex(a.shape):
            acc += (a[idx] - b[idx]) ** 2
            n += 1
        expected = 10.0 * math.log10(1.0 / (acc / n))
        assert abs(psnr(a, b) - expected) < 1e-6


def test_psnr_symmetry_and_shift_law():
    rng = np.random.default_rng(2)
    a = rng.random((8, 8, 3))
    b = rng.random((8, 8, 3))
    assert psnr(a, b) == pytest.approx(psnr(b, a))
    e = 4.0 / 255.0
    shifted = np.full_like(a, 0.5)
    assert psnr(shifted, shifted + e) == pytest.approx(
        -20.0 * math.log10(e), abs=1e-9)


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


def test_psnr_y_channel():
    rng = np.random.default_rng(3)
    a = rng.random((6, 6, 3))
    b = a.copy()
    b[:, :, 2] += 0.1  # blue-only error counts less in luma
    assert psnr(a, b, y_channel=True) > psnr(a, b, y_channel=False)


def test_video_mean_is_frame_mean_not_chunk_mean(small_datasets):
    # chunks with unequal test sizes expose the difference
    train_ds, _ = small_datasets
    big = media.ChunkDataset(0, train_ds[0].pairs[:3], 2, "test")
    small = media.ChunkDataset(1, train_ds[1].pairs[:1], 2, "test")
    rep = evaluate_bicubic([big, small])
    frames = [psnr(hr, media.bicubic_upscale(lr, 2))
              for ds in (big, small) for lr, hr in ds.pairs]
    assert rep.video_mean == pytest.approx(float(np.mean(frames)))
    chunk_mean = float(np.mean(rep.per_chunk))
    assert abs(rep.video_mean - chunk_mean) > 1e-9


def test_evaluate_model_and_margins(small_datasets):
    train_ds, test_ds = small_datasets
    cfg = training.TrainConfig(mode="m0", iterations=5, batch=2, patch_lr=8,
                               seed=0, eval_every=0)
    model = training.train_m0(train_ds, cfg, models.tiny_config(2))
    rep1 = evaluate(model, test_ds, mode="m0")
    rep2 = evaluate(model, test_ds, mode="m0")
    assert rep1.per_chunk == rep2.per_chunk
    assert rep1.video_mean == rep2.video_mean
    baseline = evaluate_bicubic(test_ds)
    rep3 = evaluate(model, test_ds, mode="m0", baseline=baseline)
    assert len(rep3.margins) == 2
    assert rep3.margins[0] == pytest.approx(
        rep3.per_chunk[0] - baseline.per_chunk[0])


def test_evaluate_scale_mismatch(small_datasets):
    train_ds, test_ds = small_datasets
    model = training.TrainedModel(
        shared=models.build_backbone(models.tiny_config(4), 0))
    with pytest.raises(EvalError):
        evaluate(model, test_ds, mode="m0")


def test_report_csv_rows_and_inf_cap(tmp_path):
    reports = [
        EvalReport(mode="bicubic", scale=2, per_chunk=[30.0, 31.0],
                   video_mean=30.5),
        EvalReport(mode="joint", scale=2, per_chunk=[math.inf, 40.0],
                   video_mean=math.inf),
    ]
    path = tmp_path / "report.csv"
    write_report_csv(str(path), reports)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4  # modes x chunks
    capped = [r for r in rows if r["mode"] == "joint" and r["chunk"] == "0"]
    assert float(capped[0]["psnr_db"]) == 99.99
