import numpy as np
import pytest

from cafm_sr import media, models, synthetic


@pytest.fixture(scope="session")
def small_video():
    """8-frame 32x32 two-scene clip for fast pipeline tests."""
    frames = [synthetic.gradient_frame(t, size=32) for t in range(4)]
    frames += [synthetic.stripe_frame(t, size=32) for t in range(4)]
    return media.VideoAsset(frames=frames, fps=30.0, source_id="small")


@pytest.fixture(scope="session")
def small_datasets(small_video):
    chunks = media.split_chunks(small_video, 2)
    return media.build_datasets(small_video, chunks, 2, test_stride=10)


@pytest.fixture(scope="session")
def tiny_params():
    return models.build_backbone(models.tiny_config(2), rng_seed=0)


def rand_frame(rng, h, w):
    return rng.random((h, w, 3), dtype=np.float64).astype(np.float32)
