"""The four SISR backbones as explicit layer programs over numpy tensors.

Each architecture compiles to a linear list of ops (conv, relu, skip
save/add, pixel shuffle) executed by a tiny interpreter; the same tape
drives the hand-written backward pass used for training and gradient
checks. Weight layout is OIHW, activations are NCHW.

SRCNN and VDSR operate on a bicubically pre-upscaled input (VDSR predicts
the residual); ESPCN and EDSR-style nets work at LR resolution and finish
with a sub-pixel shuffle. Per-chunk modulation (a depthwise scale plus
bias on each conv output, before its activation) is applied when a
modulation set is supplied.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError
from .media import bicubic_upscale_batch_nchw

ARCHS = ("srcnn", "espcn", "vdsr", "edsr_m")
VDSR_DEPTH = 20


@dataclass(frozen=True)
class BackboneConfig:
    arch: str
    scale: int
    channels: int = 64
    n_resblocks: int = 16  # edsr only
    residual_scaling: float = 1.0  # edsr only

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown arch {self.arch!r}")
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"unsupported scale {self.scale}")
        if self.channels < 2:
            raise ConfigError("channels must be >= 2")
        if self.arch == "edsr_m" and self.n_resblocks < 1:
            raise ConfigError("edsr_m needs at least one resblock")


def tiny_config(scale=2):
    """CI-speed EDSR profile (8 channels, 2 resblocks)."""
    return BackboneConfig(arch="edsr_m", scale=scale, channels=8, n_resblocks=2)


@dataclass(frozen=True)
class ConvSpec:
    name: str
    c_in: int
    c_out: int
    kernel: int
    modulated: bool


@dataclass
class BackboneParams:
    config: BackboneConfig
    tensors: dict = field(default_factory=dict)  # name -> ndarray

    @property
    def dtype(self):
        for t in self.tensors.values():
            return t.dtype
        return np.float32


@dataclass
class FeatureMap:
    data: np.ndarray  # C x H x W
    layer_index: int
    model_index: int = -1


# ---------------------------------------------------------------------------
# architecture programs


def build_program(config):
    """Returns (ops, conv_specs). Ops are executed in order."""
    s = config.scale
    c = config.channels
    ops = []
    convs = []

    def conv(name, ci, co, k, modulated):
        spec = ConvSpec(name, ci, co, k, modulated)
        convs.append(spec)
        ops.append(("conv", spec))
        return spec

    if config.arch == "srcnn":
        ops.append(("input_upscale", s))
        conv("conv0", 3, c, 9, True)
        ops.append(("relu",))
        conv("conv1", c, c // 2, 1, True)
        ops.append(("relu",))
        conv("conv2", c // 2, 3, 5, False)
    elif config.arch == "espcn":
        conv("conv0", 3, c, 5, True)
        ops.append(("relu",))
        conv("conv1", c, c // 2, 3, True)
        ops.append(("relu",))
        conv("conv2", c // 2, 3 * s * s, 3, False)
        ops.append(("pixel_shuffle", s))
    elif config.arch == "vdsr":
        ops.append(("input_upscale", s))
        ops.append(("save", "input"))
        conv("conv0", 3, c, 3, True)
        ops.append(("relu",))
        for i in range(1, VDSR_DEPTH - 1):
            conv(f"conv{i}", c, c, 3, True)
            ops.append(("relu",))
        conv(f"conv{VDSR_DEPTH - 1}", c, 3, 3, False)
        ops.append(("add", "input", 1.0))
    elif config.arch == "edsr_m":
        conv("head", 3, c, 3, True)
        ops.append(("save", "global"))
        for b in range(config.n_resblocks):
            ops.append(("save", f"rb{b}"))
            conv(f"b{b}.c0", c, c, 3, True)
            ops.append(("relu",))
            conv(f"b{b}.c1", c, c, 3, True)
            ops.append(("add", f"rb{b}", config.residual_scaling))
        conv("body_end", c, c, 3, True)
        ops.append(("add", "global", 1.0))
        stages = [2, 2] if s == 4 else [s]
        for i, r in enumerate(stages):
            conv(f"up{i}", c, c * r * r, 3, True)
            ops.append(("pixel_shuffle", r))
        conv("recon", c, 3, 3, False)
    return ops, convs


def layer_manifest(config):
    """Conv layer descriptions in execution order."""
    return build_program(config)[1]


def arch_manifest(config):
    """JSON-serializable architecture description (arch.json payload)."""
    layers = []
    for spec in layer_manifest(config):
        layers.append({
            "name": spec.name,
            "type": "conv",
            "in_channels": spec.c_in,
            "out_channels": spec.c_out,
            "kernel": spec.kernel,
            "modulated": spec.modulated,
            "weight_shape": [spec.c_out, spec.c_in, spec.kernel, spec.kernel],
            "bias_shape": [spec.c_out],
        })
    return {
        "arch": config.arch,
        "scale": config.scale,
        "channels": config.channels,
        "n_resblocks": config.n_resblocks,
        "residual_scaling": config.residual_scaling,
        "layers": layers,
    }


# ---------------------------------------------------------------------------
# parameters


def build_backbone(config, rng_seed):
    """He-uniform conv weights (fan-in), zero biases; seed-deterministic."""
    rng = np.random.default_rng(rng_seed)
    tensors = {}
    for spec in layer_manifest(config):
        fan_in = spec.c_in * spec.kernel * spec.kernel
        bound = np.sqrt(6.0 / fan_in)
        shape = (spec.c_out, spec.c_in, spec.kernel, spec.kernel)
        tensors[f"{spec.name}.weight"] = rng.uniform(
            -bound, bound, shape).astype(np.float32)
        tensors[f"{spec.name}.bias"] = np.zeros(spec.c_out, dtype=np.float32)
    return BackboneParams(config=config, tensors=tensors)


def count_params(params):
    return int(sum(t.size for t in params.tensors.values()))


def clone_params(params, dtype=None):
    tensors = {
        k: (v.astype(dtype) if dtype is not None else v.copy())
        for k, v in params.tensors.items()
    }
    return BackboneParams(config=params.config, tensors=tensors)


def params_equal(a, b):
    if a.tensors.keys() != b.tensors.keys():
        return False
    return all(np.array_equal(a.tensors[k], b.tensors[k]) for k in a.tensors)


# ---------------------------------------------------------------------------
# execution


def _pixel_shuffle(x, r):
    n, c, h, w = x.shape
    oc = c // (r * r)
    y = x.reshape(n, oc, r, r, h, w)
    y = y.transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y.reshape(n, oc, h * r, w * r))


def _pixel_unshuffle(gy, r):
    n, c, hr, wr = gy.shape
    h, w = hr // r, wr // r
    g = gy.reshape(n, c, h, r, w, r)
    g = g.transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(g.reshape(n, c * r * r, h, w))


def _cafm_entry(cafm, name):
    if cafm is None:
        return None
    return cafm.entries.get(name)


def run_forward(params, cafm, x, tape=None, capture=None):
    """Execute the program on an NCHW batch.

    tape: list to fill with backward records.
    capture: set of modulated-layer indices; returns (y, {index: feature}).
    """
    config = params.config
    ops, _ = build_program(config)
    stash = {}
    features = {}
    mod_index = -1
    pending_capture = None
    for pos, op in enumerate(ops):
        kind = op[0]
        if kind == "input_upscale":
            x = bicubic_upscale_batch_nchw(x, op[1])
            if tape is not None:
                tape.append(("stop",))
        elif kind == "save":
            stash[op[1]] = x
            if tape is not None:
                tape.append(("save", op[1]))
        elif kind == "add":
            _, tag, alpha = op
            x = stash[tag] + (alpha * x if alpha != 1.0 else x)
            if tape is not None:
                tape.append(("add", tag, alpha))
        elif kind == "pixel_shuffle":
            x = _pixel_shuffle(x, op[1])
            if tape is not None:
                tape.append(("pixel_shuffle", op[1]))
        elif kind == "relu":
            x = np.maximum(x, 0)
            if tape is not None:
                tape.append(("relu", x))
            if pending_capture is not None:
                features[pending_capture] = x
                pending_capture = None
        elif kind == "conv":
            spec = op[1]
            w = params.tensors[f"{spec.name}.weight"]
            b = params.tensors[f"{spec.name}.bias"]
            if x.shape[1] != spec.c_in:
                raise ShapeError(
                    f"{spec.name}: expected {spec.c_in} input channels, "
                    f"got {x.shape[1]}"
                )
            x_in = x
            x = kernels.conv2d_forward(x_in, w, b)
            entry = _cafm_entry(cafm, spec.name) if spec.modulated else None
            z = None
            if entry is not None:
                a, bb = entry
                if a.shape[0] != spec.c_out:
                    raise ShapeError(
                        f"{spec.name}: modulation has {a.shape[0]} channels, "
                        f"layer has {spec.c_out}"
                    )
                z = x
                x = kernels.depthwise_forward(z, a, bb)
            if tape is not None:
                tape.append(("conv", spec, x_in, z,
                             None if entry is None else entry[0]))
            if spec.modulated:
                mod_index += 1
                if capture is not None and mod_index in capture:
                    # feature point is after this layer's activation when one
                    # immediately follows, else right here
                    if pos + 1 < len(ops) and ops[pos + 1][0] == "relu":
                        pending_capture = mod_index
                    else:
                        features[mod_index] = x
    if capture is not None:
        return x, features
    return x


def run_backward(params, cafm, tape, gy, shared_grads=True, cafm_grads=True):
    """Reverse sweep over a tape from run_forward.

    Returns (grads, mod_grads): conv-tensor grads keyed like params.tensors,
    modulation grads keyed layer -> (g_scale, g_bias).
    """
    grads = {}
    mod_grads = {}
    tag_grads = {}
    g = gy
    for rec in reversed(tape):
        kind = rec[0]
        if kind == "stop":
            break
        if kind == "save":
            tag = rec[1]
            if tag in tag_grads:
                g = g + tag_grads.pop(tag)
        elif kind == "add":
            _, tag, alpha = rec
            tag_grads[tag] = tag_grads.get(tag, 0) + g
            if alpha != 1.0:
                g = alpha * g
        elif kind == "pixel_shuffle":
            g = _pixel_unshuffle(g, rec[1])
        elif kind == "relu":
            g = g * (rec[1] > 0)
        elif kind == "conv":
            _, spec, x_in, z, a = rec
            if a is not None:
                if cafm_grads:
                    ga = kernels.depthwise_backward_kernel(
                        z, g, a.shape[1], a.shape[2])
                    gb = g.sum(axis=(0, 2, 3))
                    mod_grads[spec.name] = (ga, gb)
                g = kernels.depthwise_backward_input(g, a)
            w = params.tensors[f"{spec.name}.weight"]
            if shared_grads:
                grads[f"{spec.name}.weight"] = kernels.conv2d_backward_weight(
                    x_in, g, spec.kernel, spec.kernel)
                grads[f"{spec.name}.bias"] = g.sum(axis=(0, 2, 3))
            g = kernels.conv2d_backward_input(g, w)
    return grads, mod_grads


# ---------------------------------------------------------------------------
# public inference API (frames are HWC in [0, 1])


def _to_nchw(lr):
    arr = np.asarray(lr)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise ShapeError(f"expected (B, H, W, 3) input, got {arr.shape}")
    return np.ascontiguousarray(arr.transpose(0, 3, 1, 2)), single


def forward(params, cafm, lr, clamp=False):
    """Super-resolve an HWC frame or batch; output is scale x the input."""
    x, single = _to_nchw(lr)
    x = x.astype(params.dtype, copy=False)
    y = run_forward(params, cafm, x)
    if clamp:
        y = np.clip(y, 0.0, 1.0)
    y = y.transpose(0, 2, 3, 1)
    return y[0] if single else y


def extract_features(params, cafm, lr, layers, model_index=-1):
    """Feature maps after the requested modulated layers' activations."""
    n_mod = sum(1 for s in layer_manifest(params.config) if s.modulated)
    for k in layers:
        if not 0 <= k < n_mod:
            raise IndexError(f"layer index {k} out of range [0, {n_mod})")
    if not layers:
        return []
    x, _ = _to_nchw(lr)
    x = x.astype(params.dtype, copy=False)
    _, feats = run_forward(params, cafm, x, capture=set(layers))
    return [
        FeatureMap(data=feats[k][0], layer_index=k, model_index=model_index)
        for k in layers
    ]
