"""Compact neural video delivery.

A video is split into time chunks; one super-resolution backbone is
shared across all of them and each chunk ships only a tiny depthwise
scale-and-bias modulation set (<1% of the backbone for the standard
profile). Joint training updates the shared weights from every chunk and
each private set from its own chunk only, so the whole delivery costs one
backbone plus n small deltas instead of n full models.
"""

__version__ = "0.1.0"

from . import kernels
from .bundle import (
    ModelBundle,
    StorageReport,
    pack,
    reconstruct_chunk,
    reconstruct_video,
    storage_report,
    unpack,
)
from .media import (
    ChunkDataset,
    ChunkSpec,
    VideoAsset,
    bicubic_downscale,
    bicubic_upscale,
    build_datasets,
    decode_frames,
    sample_patch_batch,
    split_chunks,
)
from .metrics import EvalReport, evaluate, evaluate_bicubic, psnr
from .models import (
    BackboneConfig,
    BackboneParams,
    build_backbone,
    count_params,
    extract_features,
    forward,
    tiny_config,
)
from .modulation import (
    CaFMSet,
    apply_cafm,
    attach_points,
    make_identity_cafm,
    overhead_ratio,
)
from .training import (
    TrainConfig,
    TrainedModel,
    chunk_loss,
    finetune_cafm,
    total_loss,
    train_joint,
    train_m0,
    train_separate,
)
