"""Delivery bundle: one shared backbone, n per-chunk modulation deltas.

Single-file format (all integers little-endian):

    magic "CAFM" | version u32 | manifest-length u32 | manifest JSON |
    tensor count u32 |
    per tensor: name-length u16, name UTF-8, section-tag u8
                (0 = shared, 1..n = chunk), dtype u8 (0 = f32), ndim u8,
                dims u32 each, raw little-endian payload |
    trailer: per-section start offset u64 (n + 1 entries)

Sections are written shared-first then chunks in order, so a client can
fetch the shared blob once and each chunk's delta independently via the
offset table. Weights are raw 32-bit floats; round-trips are bit-exact.
"""

import io
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BundleFormatError,
    BundleShapeError,
    BundleTruncatedError,
    PackError,
)
from .models import BackboneConfig, BackboneParams, forward, layer_manifest
from .modulation import CaFMSet, attach_points

MAGIC = b"CAFM"
FORMAT_VERSION = 1
DTYPE_F32 = 0


@dataclass
class ModelBundle:
    backbone_config: BackboneConfig
    shared: BackboneParams
    cafms: list = field(default_factory=list)
    manifest: dict = field(default_factory=dict)

    @property
    def n_chunks(self):
        return len(self.cafms)


@dataclass
class StorageReport:
    lr_video_bytes: int
    shared_bytes: int
    per_chunk_cafm_bytes: list
    total_bytes: int


# ---------------------------------------------------------------------------
# assembling


def make_manifest(config, kernel, n, ranges=None):
    return {
        "format_version": FORMAT_VERSION,
        "arch": config.arch,
        "scale": config.scale,
        "channels": config.channels,
        "n_resblocks": config.n_resblocks,
        "residual_scaling": config.residual_scaling,
        "kernel": kernel,
        "n": n,
        "ranges": [list(r) for r in ranges] if ranges else [],
    }


def config_from_manifest(manifest):
    return BackboneConfig(
        arch=manifest["arch"],
        scale=manifest["scale"],
        channels=manifest["channels"],
        n_resblocks=manifest["n_resblocks"],
        residual_scaling=manifest["residual_scaling"],
    )


def bundle_from_model(model, kernel, ranges=None):
    """Validated ModelBundle from a TrainedModel."""
    config = model.shared.config
    manifest = make_manifest(config, kernel, len(model.cafms), ranges)
    bundle = ModelBundle(backbone_config=config, shared=model.shared,
                         cafms=list(model.cafms), manifest=manifest)
    _check_bundle(bundle)
    return bundle


def _check_bundle(bundle):
    config = bundle.backbone_config
    specs = layer_manifest(config)
    for spec in specs:
        w = bundle.shared.tensors.get(f"{spec.name}.weight")
        b = bundle.shared.tensors.get(f"{spec.name}.bias")
        wshape = (spec.c_out, spec.c_in, spec.kernel, spec.kernel)
        if w is None or b is None:
            raise PackError(f"missing tensors for layer {spec.name}")
        if w.shape != wshape or b.shape != (spec.c_out,):
            raise PackError(
                f"layer {spec.name}: tensor shapes {w.shape}/{b.shape} "
                f"inconsistent with manifest {wshape}")
    mod = {s.name: s for s in specs if s.modulated}
    k = bundle.manifest["kernel"]
    for cafm in bundle.cafms:
        if set(cafm.entries) != set(mod):
            raise PackError("modulation set layers do not match attach points")
        for name, (a, b) in cafm.entries.items():
            c = mod[name].c_out
            if a.shape != (c, k, k) or b.shape != (c,):
                raise PackError(
                    f"modulation {name}: shapes {a.shape}/{b.shape} "
                    f"inconsistent with (C={c}, k={k})")


# ---------------------------------------------------------------------------
# serialization


def _write_tensor(buf, name, tag, arr):
    data = np.ascontiguousarray(arr, dtype="<f4")
    nb = name.encode("utf-8")
    buf.write(struct.pack("<H", len(nb)))
    buf.write(nb)
    buf.write(struct.pack("<BBB", tag, DTYPE_F32, data.ndim))
    for d in data.shape:
        buf.write(struct.pack("<I", d))
    buf.write(data.tobytes())


def pack(model_or_bundle, manifest=None, path=None):
    """Serialize to deterministic bytes; optionally write to path."""
    if isinstance(model_or_bundle, ModelBundle):
        bundle = model_or_bundle
        if manifest is not None:
            bundle.manifest = {**bundle.manifest, **manifest}
    else:
        extra = manifest or {}
        bundle = bundle_from_model(model_or_bundle,
                                   kernel=extra.get("kernel", 1),
                                   ranges=extra.get("ranges"))
    _check_bundle(bundle)
    mjson = json.dumps(bundle.manifest, sort_keys=True,
                       separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(struct.pack("<I", len(mjson)))
    buf.write(mjson)
    names = [s.name for s in layer_manifest(bundle.backbone_config)]
    mod_names = attach_points(bundle.backbone_config)
    count = 2 * len(names) + 2 * len(mod_names) * len(bundle.cafms)
    buf.write(struct.pack("<I", count))
    offsets = [buf.tell()]
    for name in names:
        _write_tensor(buf, f"{name}.weight", 0,
                      bundle.shared.tensors[f"{name}.weight"])
        _write_tensor(buf, f"{name}.bias", 0,
                      bundle.shared.tensors[f"{name}.bias"])
    for ci, cafm in enumerate(bundle.cafms):
        offsets.append(buf.tell())
        for name in mod_names:
            a, b = cafm.entries[name]
            _write_tensor(buf, f"{name}.mod.scale", ci + 1, a)
            _write_tensor(buf, f"{name}.mod.bias", ci + 1, b)
    for off in offsets:
        buf.write(struct.pack("<Q", off))
    blob = buf.getvalue()
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(blob)
    return blob


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def read(self, n, what):
        if self.pos + n > len(self.data):
            raise BundleTruncatedError(
                f"bundle ends inside {what} (need {n} bytes at {self.pos})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u(self, fmt, what):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.read(size, what))[0]


def unpack(path_or_bytes):
    """Parse and fully validate a bundle file."""
    if isinstance(path_or_bytes, (bytes, bytearray)):
        data = bytes(path_or_bytes)
    else:
        with open(path_or_bytes, "rb") as fh:
            data = fh.read()
    rd = _Reader(data)
    if rd.read(4, "magic") != MAGIC:
        raise BundleFormatError("bad magic; not a model bundle")
    version = rd.u("<I", "version")
    if version != FORMAT_VERSION:
        raise BundleFormatError(f"unsupported format version {version}")
    mlen = rd.u("<I", "manifest length")
    try:
        manifest = json.loads(rd.read(mlen, "manifest").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleFormatError(f"manifest is not valid JSON: {exc}") from exc
    config = config_from_manifest(manifest)
    n = manifest["n"]
    k = manifest["kernel"]
    count = rd.u("<I", "tensor count")
    section_starts = {}
    tensors = {}  # tag -> {name: array}
    for _ in range(count):
        start = rd.pos
        nlen = rd.u("<H", "tensor name length")
        name = rd.read(nlen, "tensor name").decode("utf-8")
        tag = rd.u("<B", "section tag")
        dtype = rd.u("<B", "dtype")
        if dtype != DTYPE_F32:
            raise BundleFormatError(f"unknown dtype code {dtype}")
        ndim = rd.u("<B", "ndim")
        dims = tuple(rd.u("<I", "dims") for _ in range(ndim))
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = rd.read(4 * size, f"tensor {name}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        section_starts.setdefault(tag, start)
        if tag > n:
            raise BundleFormatError(f"tensor {name} has section tag {tag} > n={n}")
        tensors.setdefault(tag, {})[name] = arr
    offsets = [rd.u("<Q", "offset table") for _ in range(n + 1)]
    if rd.pos != len(data):
        raise BundleFormatError(
            f"{len(data) - rd.pos} trailing bytes after offset table")
    for sec, off in enumerate(offsets):
        if sec in section_starts and section_starts[sec] != off:
            raise BundleFormatError(
                f"offset table entry {sec} ({off}) does not match section "
                f"start ({section_starts[sec]})")

    # rebuild + shape-check against the architecture manifest
    specs = layer_manifest(config)
    shared_tensors = {}
    shared_in = tensors.get(0, {})
    for spec in specs:
        wshape = (spec.c_out, spec.c_in, spec.kernel, spec.kernel)
        for suffix, shape in (("weight", wshape), ("bias", (spec.c_out,))):
            key = f"{spec.name}.{suffix}"
            if key not in shared_in:
                raise BundleShapeError(f"missing shared tensor {key}")
            if shared_in[key].shape != shape:
                raise BundleShapeError(
                    f"{key}: shape {shared_in[key].shape} != {shape}")
            shared_tensors[key] = shared_in[key]
    shared = BackboneParams(config=config, tensors=shared_tensors)
    mod = {s.name: s for s in specs if s.modulated}
    cafms = []
    for ci in range(n):
        sec = tensors.get(ci + 1, {})
        entries = {}
        for name, spec in mod.items():
            a = sec.get(f"{name}.mod.scale")
            b = sec.get(f"{name}.mod.bias")
            if a is None or b is None:
                raise BundleShapeError(
                    f"chunk {ci}: missing modulation tensors for {name}")
            if a.shape != (spec.c_out, k, k) or b.shape != (spec.c_out,):
                raise BundleShapeError(
                    f"chunk {ci} {name}: shapes {a.shape}/{b.shape} "
                    f"inconsistent with (C={spec.c_out}, k={k})")
            entries[name] = (a, b)
        cafms.append(CaFMSet(chunk_index=ci, kernel=k, entries=entries))
    return ModelBundle(backbone_config=config, shared=shared, cafms=cafms,
                       manifest=manifest)


# ---------------------------------------------------------------------------
# accounting and reconstruction


def section_byte_spans(path):
    """(shared_bytes, per-chunk byte list) from a bundle file's offsets."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise BundleFormatError("bad magic; not a model bundle")
    mlen = struct.unpack("<I", data[8:12])[0]
    manifest = json.loads(data[12:12 + mlen].decode("utf-8"))
    n = manifest["n"]
    trailer = 8 * (n + 1)
    if len(data) < trailer:
        raise BundleTruncatedError("file shorter than its offset table")
    offsets = list(struct.unpack(f"<{n + 1}Q", data[-trailer:]))
    trailer_start = len(data) - trailer
    per_chunk = []
    for i in range(1, n + 1):
        end = offsets[i + 1] if i < n else trailer_start
        per_chunk.append(end - offsets[i])
    shared = len(data) - sum(per_chunk)
    return shared, per_chunk


def storage_report(bundle_path, lr_video_files):
    """Exact byte accounting of a delivery unit (LR media + bundle).

    Shared bytes include the header, manifest, and offset table: they ship
    once with the backbone. Chunk bytes are each chunk's tensor records.
    """
    shared, per_chunk = section_byte_spans(bundle_path)
    lr_bytes = 0
    for f in lr_video_files:
        lr_bytes += os.path.getsize(f)
    return StorageReport(
        lr_video_bytes=lr_bytes,
        shared_bytes=shared,
        per_chunk_cafm_bytes=per_chunk,
        total_bytes=lr_bytes + shared + sum(per_chunk),
    )


def reconstruct_chunk(bundle, chunk_index, lr_frames):
    """Super-resolve one chunk's LR frames with its private modulation."""
    cafm = None
    if bundle.cafms:
        if not 0 <= chunk_index < len(bundle.cafms):
            raise IndexError(
                f"chunk {chunk_index} out of range [0, {len(bundle.cafms)})")
        cafm = bundle.cafms[chunk_index]
    return [forward(bundle.shared, cafm, lr, clamp=True) for lr in lr_frames]


def reconstruct_video(bundle, lr_frames):
    """Stitch all chunks in manifest order; frame count is preserved."""
    ranges = bundle.manifest.get("ranges") or []
    if not bundle.cafms:
        return reconstruct_chunk(bundle, 0, lr_frames)
    if not ranges:
        raise BundleShapeError(
            "bundle has chunk deltas but no frame ranges in its manifest")
    out = []
    for ci, (start, end) in enumerate(ranges):
        out.extend(reconstruct_chunk(bundle, ci, lr_frames[start:end]))
    return out
