"""Per-chunk feature modulation: depthwise scale-and-bias on conv outputs.

Every modulated conv layer gets a private (scale, bias) pair per chunk:
scale is a C x k x k depthwise kernel, bias is per-channel. At identity
initialization (center tap 1, zero bias) modulation is a no-op, so a
freshly privatized model reproduces the shared backbone exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .models import layer_manifest

SUPPORTED_KERNELS = (1, 3, 5, 7)


@dataclass
class CaFMSet:
    chunk_index: int
    kernel: int
    entries: dict = field(default_factory=dict)  # layer -> (scale, bias)

    def copy(self):
        return CaFMSet(
            chunk_index=self.chunk_index,
            kernel=self.kernel,
            entries={k: (a.copy(), b.copy()) for k, (a, b) in self.entries.items()},
        )

    def astype(self, dtype):
        return CaFMSet(
            chunk_index=self.chunk_index,
            kernel=self.kernel,
            entries={
                k: (a.astype(dtype), b.astype(dtype))
                for k, (a, b) in self.entries.items()
            },
        )


def check_kernel(k):
    if k not in SUPPORTED_KERNELS:
        raise ConfigError(f"modulation kernel must be one of {SUPPORTED_KERNELS}, got {k}")


def attach_points(config):
    """Names of the conv layers that receive modulation.

    Every conv output is modulated except the final reconstruction layer,
    whose 3-channel output adds negligible capacity.
    """
    return [s.name for s in layer_manifest(config) if s.modulated]


def make_identity_cafm(config, k, chunk_index=0, dtype=np.float32):
    check_kernel(k)
    entries = {}
    for spec in layer_manifest(config):
        if not spec.modulated:
            continue
        a = np.zeros((spec.c_out, k, k), dtype=dtype)
        a[:, k // 2, k // 2] = 1.0
        b = np.zeros(spec.c_out, dtype=dtype)
        entries[spec.name] = (a, b)
    return CaFMSet(chunk_index=chunk_index, kernel=k, entries=entries)


def apply_cafm(x, a, b):
    """Depthwise conv plus per-channel bias on a C x H x W feature map."""
    arr = np.asarray(x)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.shape[1] != a.shape[0] or a.shape[0] != b.shape[0]:
        raise ShapeError(
            f"channel mismatch: x has {arr.shape[1]}, scale {a.shape[0]}, "
            f"bias {b.shape[0]}"
        )
    y = kernels.depthwise_forward(arr, a, b)
    return y[0] if single else y


def cafm_param_count(config, k):
    check_kernel(k)
    total = 0
    for spec in layer_manifest(config):
        if spec.modulated:
            total += spec.c_out * k * k + spec.c_out
    return total


def overhead_ratio(config, k):
    """Private parameters per chunk relative to the shared backbone."""
    backbone = sum(
        spec.c_out * spec.c_in * spec.kernel * spec.kernel + spec.c_out
        for spec in layer_manifest(config)
    )
    return cafm_param_count(config, k) / backbone


def cafm_sets_equal(a, b):
    if a.entries.keys() != b.entries.keys():
        return False
    for name in a.entries:
        sa, ba = a.entries[name]
        sb, bb = b.entries[name]
        if not (np.array_equal(sa, sb) and np.array_equal(ba, bb)):
            return False
    return True
