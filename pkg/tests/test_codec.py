"""Rate-matching search logic and encoder harness contracts."""

import numpy as np
import pytest

from cafm_sr import codec, media
from cafm_sr.codec import LOW_FRAC, codec_baseline, encoder_available, match_rate
from cafm_sr.errors import DataError, EncoderMissingError, RateError


def _linear_encoder(duration=2.0, overhead=900, log=None):
    """Fake encoder: size tracks bitrate linearly plus container overhead."""

    def encode(bps):
        size = int(bps * duration / 8) + overhead
        if log is not None:
            log.append((bps, size))
        return size, f"probe_{bps}"

    return encode


def test_match_rate_lands_in_window():
    budget = 50_000
    log = []
    encode = _linear_encoder(log=log)
    bps, size, artifact = match_rate(encode, budget, budget * 8 / 2.0)
    assert LOW_FRAC * budget <= size <= budget
    assert len(log) <= 8
    assert artifact == f"probe_{bps}"


def test_match_rate_monotone_budgets():
    sizes = []
    for budget in (30_000, 60_000):
        _, size, _ = match_rate(_linear_encoder(), budget, budget * 8 / 2.0)
        sizes.append(size)
    assert sizes[1] > sizes[0]


def test_match_rate_floor_error():
    # even the floor bitrate produces more bytes than the budget
    def encode(bps):
        return max(int(bps * 0.25), 20_000), "floor"

    with pytest.raises(RateError) as err:
        match_rate(encode, 5_000, 40_000)
    assert err.value.floor_bytes == 20_000


def test_match_rate_unreachable_window():
    # quantized encoder jumps over the [0.95, 1.0] window
    def encode(bps):
        return 80_000 if bps > 100_000 else 60_000, "q"

    with pytest.raises(RateError):
        match_rate(encode, 70_000, 120_000)


def test_codec_baseline_requires_encoder(monkeypatch, small_video):
    monkeypatch.setattr(codec, "find_encoder", lambda: None)
    with pytest.raises(EncoderMissingError):
        codec_baseline(small_video, 10_000)


def test_codec_baseline_rejects_unknown_codec(small_video):
    with pytest.raises(DataError):
        codec_baseline(small_video, 10_000, codec="av2")


@pytest.mark.skipif(not encoder_available(),
                    reason="no system video encoder (ffmpeg) on PATH")
def test_codec_baseline_end_to_end(tmp_path, small_video):
    rep = codec_baseline(small_video, 200_000, codec="h264",
                         workdir=str(tmp_path), ranges=[[0, 4], [4, 8]])
    assert len(rep.per_chunk) == 2
    assert rep.storage.total_bytes <= 200_000
    assert np.isfinite(rep.video_mean)
