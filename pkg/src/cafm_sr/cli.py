"""Command-line entry point wiring the whole pipeline.

    cafm prepare        decode video, synthesize LR, write chunk manifest
    cafm train          train m0 | separate | ft | joint on a prepared workdir
    cafm pack           emit a delivery bundle for a trained mode
    cafm reconstruct    super-resolve cached LR frames from a bundle
    cafm report         per-chunk PSNR / storage table (report.csv)
    cafm analyze        cross-model feature distance study
    cafm codec-compare  bitrate-matched H.264/H.265 baseline

Options can come from an INI config file (sections media/backbone/train/
eval); explicit flags win. Exit codes: 0 ok, 2 usage, 3 data, 4 training
divergence, 5 missing encoder.
"""

import argparse
import configparser
import glob
import json
import os
import sys

from . import bundle as bundle_mod
from . import media, metrics, models, training
from .errors import CafmError, DataError, UsageError

DEFAULTS = {
    "scale": 2,
    "chunks": 2,
    "test_stride": 10,
    "limit": None,
    "arch": "edsr_m",
    "channels": 64,
    "resblocks": 16,
    "residual_scaling": 1.0,
    "mode": "joint",
    "iterations": 2000,
    "batch": 8,
    "lr": 1e-4,
    "seed": 0,
    "patch_lr": 48,
    "kernel": 1,
    "eval_every": 200,
    "y_channel": False,
    "codec": "h264",
    "budget": None,
}

_CONFIG_KEYS = {
    "media": {"scale": int, "chunks": int, "test_stride": int, "limit": int},
    "backbone": {"arch": str, "channels": int, "resblocks": int,
                 "residual_scaling": float},
    "train": {"mode": str, "iterations": int, "batch": int, "lr": float,
              "seed": int, "patch_lr": int, "kernel": int, "eval_every": int},
    "eval": {"y_channel": bool, "codec": str, "budget": int},
}


def load_config(path):
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    out = {}
    for section in parser.sections():
        if section not in _CONFIG_KEYS:
            raise UsageError(f"unknown config section [{section}]")
        known = _CONFIG_KEYS[section]
        for key, raw in parser.items(section):
            if key not in known:
                raise UsageError(f"unknown config key {key!r} in [{section}]")
            kind = known[key]
            if kind is bool:
                out[key] = parser.getboolean(section, key)
            else:
                out[key] = kind(raw)
    return out


def _setting(args, config, name):
    val = getattr(args, name.replace("-", "_"), None)
    if val is not None:
        return val
    if name in config:
        return config[name]
    return DEFAULTS[name]


def _add_common(sub):
    sub.add_argument("--config", help="INI config file")
    sub.add_argument("--workdir", required=True)
    sub.add_argument("--seed", type=int)
    sub.add_argument("--scale", type=int, choices=(2, 3, 4))
    sub.add_argument("--chunks", type=int)
    sub.add_argument("--kernel", type=int, choices=(1, 3, 5, 7))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cafm",
        description="compact neural video delivery: shared backbone + "
                    "per-chunk modulation deltas")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("prepare", help="decode + degrade + chunk a video")
    _add_common(p)
    p.add_argument("--video", required=True,
                   help="video file or directory of numbered frames")
    p.add_argument("--test-stride", type=int)
    p.add_argument("--limit", type=int, help="use at most this many frames")

    p = subs.add_parser("train", help="train one mode on a prepared workdir")
    _add_common(p)
    p.add_argument("--mode", choices=training.MODES)
    p.add_argument("--arch", choices=models.ARCHS)
    p.add_argument("--channels", type=int)
    p.add_argument("--resblocks", type=int)
    p.add_argument("--residual-scaling", type=float)
    p.add_argument("--iterations", type=int,
                   help="steps per chunk-equivalent (joint/m0 run n x this)")
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--patch-lr", type=int)
    p.add_argument("--eval-every", type=int)

    p = subs.add_parser("pack", help="write a delivery bundle for a mode")
    _add_common(p)
    p.add_argument("--mode", choices=training.MODES)
    p.add_argument("--output", required=True)

    p = subs.add_parser("reconstruct", help="client-side super-resolution")
    _add_common(p)
    p.add_argument("--mode", choices=training.MODES)
    p.add_argument("--bundle", help="explicit bundle path (overrides --mode)")
    p.add_argument("--chunk", type=int, help="only this chunk (default: all)")

    p = subs.add_parser("report", help="PSNR/storage table over trained modes")
    _add_common(p)
    p.add_argument("--y-channel", action="store_true", default=None)
    p.add_argument("--plots", action="store_true")

    p = subs.add_parser("analyze", help="cross-model feature distances")
    _add_common(p)
    p.add_argument("--probe", help="probe image (default: first test frame)")

    p = subs.add_parser("codec-compare", help="rate-matched codec baseline")
    _add_common(p)
    p.add_argument("--codec", choices=("h264", "h265"))
    p.add_argument("--budget", type=int,
                   help="byte budget (default: joint bundle + LR frames)")
    return parser


# ---------------------------------------------------------------------------
# command implementations


def _bundles_dir(workdir):
    return os.path.join(workdir, "bundles")


def _bundle_path(workdir, mode, chunk=None):
    name = f"separate_{chunk}.bundle" if mode == "separate" else f"{mode}.bundle"
    return os.path.join(_bundles_dir(workdir), name)


def _lr_files(workdir, manifest):
    pattern = os.path.join(workdir, f"lrx{manifest['scale']}", "*.png")
    files = sorted(glob.glob(pattern))
    if not files:
        raise DataError(f"no cached LR frames in {workdir}")
    return files


def cmd_prepare(args, config):
    scale = _setting(args, config, "scale")
    n = _setting(args, config, "chunks")
    stride = _setting(args, config, "test_stride")
    limit = _setting(args, config, "limit")
    video = media.decode_frames(args.video, limit=limit)
    os.makedirs(args.workdir, exist_ok=True)
    manifest = media.prepare_workdir(video, scale, n, args.workdir,
                                     test_stride=stride)
    print(f"prepared {video.frame_count} frames, scale x{scale}, "
          f"{n} chunks -> {args.workdir}")
    return manifest


def _backbone_config(args, config, scale):
    return models.BackboneConfig(
        arch=_setting(args, config, "arch"),
        scale=scale,
        channels=_setting(args, config, "channels"),
        n_resblocks=_setting(args, config, "resblocks"),
        residual_scaling=_setting(args, config, "residual_scaling"),
    )


def _train_config(args, config, mode):
    return training.TrainConfig(
        mode=mode,
        iterations=_setting(args, config, "iterations"),
        batch=_setting(args, config, "batch"),
        lr=_setting(args, config, "lr"),
        seed=_setting(args, config, "seed"),
        patch_lr=_setting(args, config, "patch_lr"),
        kernel=_setting(args, config, "kernel"),
        eval_every=_setting(args, config, "eval_every"),
    )


def cmd_train(args, config):
    train_ds, test_ds, manifest = media.load_cached_datasets(args.workdir)
    mode = _setting(args, config, "mode")
    bc = _backbone_config(args, config, manifest["scale"])
    tc = _train_config(args, config, mode)
    ranges = manifest["ranges"]
    os.makedirs(_bundles_dir(args.workdir), exist_ok=True)
    logs = os.path.join(args.workdir, "logs")
    os.makedirs(logs, exist_ok=True)
    with open(os.path.join(args.workdir, "arch.json"), "w") as fh:
        json.dump(models.arch_manifest(bc), fh, indent=2, sort_keys=True)
    ckpt_dir = os.path.join(args.workdir, "ckpt", mode)

    if mode == "m0":
        model = training.train_m0(train_ds, tc, bc, test_datasets=test_ds,
                                  checkpoint_dir=ckpt_dir)
        out = [(model, _bundle_path(args.workdir, "m0"), 0)]
    elif mode == "separate":
        ms = training.train_separate(train_ds, tc, bc, test_datasets=test_ds,
                                     checkpoint_dir=ckpt_dir)
        out = [(m, _bundle_path(args.workdir, "separate", i), 0)
               for i, m in enumerate(ms)]
    elif mode == "ft":
        m0_path = _bundle_path(args.workdir, "m0")
        if not os.path.exists(m0_path):
            raise DataError("ft mode needs a trained m0 bundle; run "
                            "`cafm train --mode m0` first")
        base = bundle_mod.unpack(m0_path)
        m0_model = training.TrainedModel(shared=base.shared)
        model = training.finetune_cafm(m0_model, train_ds, tc,
                                       test_datasets=test_ds,
                                       checkpoint_dir=ckpt_dir)
        out = [(model, _bundle_path(args.workdir, "ft"), tc.kernel)]
    else:  # joint
        model = training.train_joint(train_ds, tc, bc, test_datasets=test_ds,
                                     checkpoint_dir=ckpt_dir)
        out = [(model, _bundle_path(args.workdir, "joint"), tc.kernel)]

    for model, path, kernel in out:
        bundle_mod.pack(model, {"kernel": kernel or tc.kernel,
                                "ranges": ranges}, path=path)
        label = os.path.splitext(os.path.basename(path))[0]
        training.write_history_csv(
            os.path.join(logs, f"{label}_history.csv"), model.history)
        if model.history:
            it, loss, ps = model.history[-1]
            print(f"{label}: {it} steps, loss {loss:.5f}, psnr {ps:.2f} dB "
                  f"-> {path}")
        else:
            print(f"{label}: 0 steps -> {path}")
    return 0


def cmd_pack(args, config):
    mode = _setting(args, config, "mode")
    src = _bundle_path(args.workdir, mode)
    if mode == "separate":
        raise UsageError("pack ships one bundle; separate mode trains "
                         "standalone per-chunk bundles already")
    if not os.path.exists(src):
        raise DataError(f"no trained bundle for mode {mode!r} in {args.workdir}")
    b = bundle_mod.unpack(src)
    manifest = media.read_chunk_manifest(args.workdir)
    b.manifest["ranges"] = manifest["ranges"]
    blob = bundle_mod.pack(b, path=args.output)
    print(f"packed {mode}: {len(blob)} bytes -> {args.output}")
    return 0


def _load_bundle_for(args, mode):
    if getattr(args, "bundle", None):
        return bundle_mod.unpack(args.bundle), os.path.basename(args.bundle)
    path = _bundle_path(args.workdir, mode)
    if not os.path.exists(path):
        raise DataError(f"no bundle for mode {mode!r}; train it first")
    return bundle_mod.unpack(path), mode


def cmd_reconstruct(args, config):
    manifest = media.read_chunk_manifest(args.workdir)
    mode = _setting(args, config, "mode")
    b, label = _load_bundle_for(args, mode)
    lr_files = _lr_files(args.workdir, manifest)
    lr_frames = [media.read_frame_png(f) for f in lr_files]
    out_dir = os.path.join(args.workdir, f"sr_{label}")
    os.makedirs(out_dir, exist_ok=True)
    if args.chunk is not None:
        start, end = manifest["ranges"][args.chunk]
        frames = bundle_mod.reconstruct_chunk(b, args.chunk,
                                              lr_frames[start:end])
        indices = range(start, end)
    else:
        frames = bundle_mod.reconstruct_video(b, lr_frames)
        indices = range(len(frames))
    for i, frame in zip(indices, frames):
        media.write_frame_png(os.path.join(out_dir, "%06d.png" % i), frame)
    print(f"reconstructed {len(frames)} frames -> {out_dir}")
    return 0


def _discover_modes(workdir):
    found = []
    for mode in ("m0", "ft", "joint"):
        if os.path.exists(_bundle_path(workdir, mode)):
            found.append(mode)
    seps = sorted(glob.glob(os.path.join(_bundles_dir(workdir),
                                         "separate_*.bundle")))
    return found, seps


def _separate_report(sep_paths, test_ds, lr_files, y_channel):
    import numpy as np

    per_chunk = []
    frames = []
    total_bytes = 0
    scale = test_ds[0].scale
    for ci, path in enumerate(sep_paths):
        b = bundle_mod.unpack(path)
        rep = metrics.evaluate(b, [test_ds[ci]], mode="separate",
                               y_channel=y_channel)
        per_chunk.extend(rep.per_chunk)
        frames.extend(
            [rep.video_mean] * len(test_ds[ci]))
        total_bytes += os.path.getsize(path)
    storage = bundle_mod.StorageReport(
        lr_video_bytes=sum(os.path.getsize(f) for f in lr_files),
        shared_bytes=total_bytes, per_chunk_cafm_bytes=[],
        total_bytes=total_bytes + sum(os.path.getsize(f) for f in lr_files))
    mean = float(np.mean(frames))
    return metrics.EvalReport(mode="separate", scale=scale,
                              per_chunk=per_chunk, video_mean=mean,
                              storage=storage)


def cmd_report(args, config):
    train_ds, test_ds, manifest = media.load_cached_datasets(args.workdir)
    y_channel = bool(_setting(args, config, "y_channel"))
    lr_files = _lr_files(args.workdir, manifest)
    modes, seps = _discover_modes(args.workdir)
    if not modes and not seps:
        raise UsageError(f"nothing trained in {args.workdir}; run `cafm train`")
    reports = [metrics.evaluate_bicubic(test_ds, y_channel=y_channel)]
    sep_report = None
    if seps:
        sep_report = _separate_report(seps, test_ds, lr_files, y_channel)
        reports.append(sep_report)
    for mode in modes:
        path = _bundle_path(args.workdir, mode)
        b = bundle_mod.unpack(path)
        storage = bundle_mod.storage_report(path, lr_files)
        rep = metrics.evaluate(b, test_ds, mode=mode, storage=storage,
                               y_channel=y_channel,
                               baseline=sep_report)
        reports.append(rep)
    out = os.path.join(args.workdir, "report.csv")
    metrics.write_report_csv(out, reports)
    for rep in reports:
        chunks = " ".join(f"{v:.2f}" for v in rep.per_chunk)
        print(f"{rep.mode:>9}: mean {rep.video_mean:.2f} dB  [{chunks}]")
    if args.plots:
        metrics.plot_psnr_vs_storage(
            os.path.join(args.workdir, "report.png"), reports)
    print(f"wrote {out}")
    return 0


def cmd_analyze(args, config):
    from . import analysis

    train_ds, test_ds, manifest = media.load_cached_datasets(args.workdir)
    _, seps = _discover_modes(args.workdir)
    if len(seps) < 2:
        raise DataError("analyze needs at least two separately trained "
                        "chunk models (`cafm train --mode separate`)")
    bundles = [bundle_mod.unpack(p) for p in seps]
    if args.probe:
        probe_video = media.decode_frames(args.probe)
        probe = probe_video.frames[0]
    else:
        probe = test_ds[0].pairs[0][0]
    out_dir = os.path.join(args.workdir, "analysis")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "distances.csv")
    analysis.write_distances_csv(csv_path, bundles, probe)
    images = analysis.save_heatmaps(out_dir, bundles, probe)
    diag, off = analysis.diagonal_stats(bundles, probe)
    print(f"diag mean {diag:.4f}, off-diag mean {off:.4f} "
          f"({len(images)} heatmaps) -> {out_dir}")
    return 0


def cmd_codec_compare(args, config):
    from . import codec as codec_mod

    train_ds, test_ds, manifest = media.load_cached_datasets(args.workdir)
    codec = _setting(args, config, "codec")
    budget = _setting(args, config, "budget")
    lr_files = _lr_files(args.workdir, manifest)
    if budget is None:
        joint = _bundle_path(args.workdir, "joint")
        if not os.path.exists(joint):
            raise UsageError("no --budget given and no joint bundle to "
                             "derive one from")
        budget = (os.path.getsize(joint)
                  + sum(os.path.getsize(f) for f in lr_files))
    hr_files = sorted(glob.glob(os.path.join(args.workdir, "hr", "*.png")))
    frames = [media.read_frame_png(f) for f in hr_files]
    video = media.VideoAsset(frames=frames, fps=manifest.get("fps", 30.0))
    cmd_log = []
    rep = codec_mod.codec_baseline(video, budget, codec=codec,
                                   workdir=os.path.join(args.workdir, "codec"),
                                   ranges=manifest["ranges"], log=cmd_log)
    out = os.path.join(args.workdir, f"codec_{codec}.csv")
    metrics.write_report_csv(out, [rep])
    with open(os.path.join(args.workdir, f"codec_{codec}_invocations.json"),
              "w") as fh:
        json.dump(cmd_log, fh, indent=2)
    print(f"{codec}: mean {rep.video_mean:.2f} dB at "
          f"{rep.storage.total_bytes} B (budget {budget} B) -> {out}")
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "pack": cmd_pack,
    "reconstruct": cmd_reconstruct,
    "report": cmd_report,
    "analyze": cmd_analyze,
    "codec-compare": cmd_codec_compare,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    config = load_config(args.config) if args.config else {}
    try:
        COMMANDS[args.command](args, config)
    except CafmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
