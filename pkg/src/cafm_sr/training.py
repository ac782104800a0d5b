"""Training regimes over the shared backbone and per-chunk modulation.

Four modes:
  m0        one backbone for the whole video;
  separate  one independent backbone per chunk;
  ft        freeze an m0 backbone, finetune each chunk's modulation only;
  joint     shared backbone and all modulation sets optimized together.

In joint mode every batch element picks its chunk uniformly at random;
gradients from a sample always update the shared weights but only that
sample's chunk modulation. L1 loss, Adam, step-decayed learning rate.
All randomness derives from (seed, mode, chunk, iteration), so runs are
bit-reproducible.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, TrainingDivergedError
from .media import merge_datasets, sample_patch_batch
from .metrics import model_psnrs
from .models import build_backbone, clone_params, run_backward, run_forward
from .modulation import make_identity_cafm

MODES = ("m0", "separate", "ft", "joint")
_MODE_CODE = {"m0": 0, "separate": 1, "ft": 2, "joint": 3}


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "joint"
    iterations: int = 2000  # steps per chunk-equivalent (see resolve_budget)
    batch: int = 8
    lr: float = 1e-4
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    lr_decay: tuple = None  # ((iteration, factor), ...); default halves at 50%/75%
    seed: int = 0
    patch_lr: int = 48
    kernel: int = 1
    eval_every: int = 200

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown training mode {self.mode!r}")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.iterations < 0 or self.batch < 1:
            raise ConfigError("iterations must be >= 0 and batch >= 1")


@dataclass
class TrainedModel:
    shared: "object"  # BackboneParams
    cafms: list = field(default_factory=list)
    history: list = field(default_factory=list)  # (iteration, loss, psnr)


def resolve_budget(mode, iterations, n):
    """Total optimizer steps for a mode, keeping joint comparable to the
    sum of the per-chunk models: joint/m0 get n x iterations, separate and
    ft spend iterations per chunk."""
    if mode in ("joint", "m0"):
        return n * iterations
    return iterations


# ---------------------------------------------------------------------------
# loss


def chunk_loss(sr_batch, hr_batch):
    """Mean absolute error over a batch (per-sample L1, per-pixel mean)."""
    sr = np.asarray(sr_batch)
    hr = np.asarray(hr_batch)
    if sr.shape != hr.shape:
        from .errors import ShapeError

        raise ShapeError(f"loss shapes differ: {sr.shape} vs {hr.shape}")
    return float(np.mean(np.abs(sr - hr)))


def total_loss(chunk_losses):
    return float(sum(chunk_losses))


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    def __init__(self, betas=(0.9, 0.999), eps=1e-8):
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = {}

    def step(self, tensors, grads, lr):
        # only tensors with a gradient this step are touched (incl. state),
        # so untouched modulation sets stay bit-identical
        for name, g in grads.items():
            t = self.t.get(name, 0) + 1
            self.t[name] = t
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            self.m[name] = m
            mhat = m / (1.0 - self.b1 ** t)
            vhat = v / (1.0 - self.b2 ** t)
            tensors[name] -= lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_arrays(self):
        out = {}
        for name in self.m:
            out[f"m::{name}"] = self.m[name]
            out[f"v::{name}"] = self.v[name]
        out["t::counts"] = np.array(
            [self.t[name] for name in self.m], dtype=np.int64
        )
        return out


def lr_at(config, iteration, total):
    decay = config.lr_decay
    if decay is None:
        decay = ((total // 2, 0.5), (3 * total // 4, 0.5))
    lr = config.lr
    for milestone, factor in decay:
        if iteration >= milestone:
            lr *= factor
    return lr


# ---------------------------------------------------------------------------
# batching


def _derive_seed(config_seed, mode, chunk, iteration):
    ss = np.random.SeedSequence([config_seed, _MODE_CODE[mode], chunk + 1,
                                 iteration])
    return int(ss.generate_state(1)[0])


def _stack_nchw(pairs):
    lr = np.ascontiguousarray(
        np.stack([p[0] for p in pairs]).transpose(0, 3, 1, 2))
    hr = np.ascontiguousarray(
        np.stack([p[1] for p in pairs]).transpose(0, 3, 1, 2))
    return lr, hr


def _chunk_groups(datasets, config, mode, iteration):
    """Batch composition for one step: chunk index -> (lr, hr) NCHW."""
    n = len(datasets)
    if n == 1:
        counts = {0: config.batch}
    else:
        rng = np.random.default_rng(
            _derive_seed(config.seed, mode, -1, iteration))
        picks = rng.integers(0, n, size=config.batch)
        counts = {}
        for ci in picks:
            counts[int(ci)] = counts.get(int(ci), 0) + 1
    groups = []
    for ci in sorted(counts):
        pairs = sample_patch_batch(
            datasets[ci], counts[ci], config.patch_lr,
            _derive_seed(config.seed, mode, ci, iteration))
        groups.append((ci, *_stack_nchw(pairs)))
    return groups


# ---------------------------------------------------------------------------
# core loop


def _flat_keys(params, cafms):
    flat = dict(params.tensors)
    for ci, cafm in enumerate(cafms):
        for layer, (a, b) in cafm.entries.items():
            flat[f"cafm{ci}::{layer}::scale"] = a
            flat[f"cafm{ci}::{layer}::bias"] = b
    return flat


def _step_grads(params, cafms, groups, shared_grads=True, cafm_grads=True):
    """Forward/backward over the chunk groups of one batch.

    Loss is the sum of per-chunk mean L1 terms; each group's gradients
    flow to the shared tensors and to that group's modulation set only.
    """
    grads = {}
    losses = []
    for ci, xb, yb in groups:
        cafm = cafms[ci] if cafms else None
        tape = []
        sr = run_forward(params, cafm, xb, tape=tape)
        diff = sr - yb
        losses.append(float(np.mean(np.abs(diff))))
        gy = np.sign(diff) / diff.size
        g_shared, g_mod = run_backward(
            params, cafm, tape, gy.astype(sr.dtype),
            shared_grads=shared_grads,
            cafm_grads=cafm_grads and cafm is not None)
        for k, v in g_shared.items():
            if k in grads:
                grads[k] = grads[k] + v
            else:
                grads[k] = v
        for layer, (ga, gb) in g_mod.items():
            grads[f"cafm{ci}::{layer}::scale"] = ga
            grads[f"cafm{ci}::{layer}::bias"] = gb
    return grads, total_loss(losses)


def _record(history, model, iteration, loss, test_datasets):
    if test_datasets:
        _, mean = model_psnrs(model.shared, model.cafms, test_datasets)
    else:
        mean = float("nan")
    history.append((iteration, loss, mean))


def _optimize(params, cafms, datasets, config, mode, total_steps,
              test_datasets=None, shared_grads=True, cafm_grads=True,
              chunk_only=None, opt=None, checkpoint_dir=None):
    """Shared optimization loop. chunk_only pins every batch to one chunk."""
    model = TrainedModel(shared=params, cafms=list(cafms))
    flat = _flat_keys(params, model.cafms)
    opt = opt or Adam(config.adam_betas, config.adam_eps)
    history = model.history
    loss = float("nan")
    for it in range(total_steps):
        if chunk_only is None:
            groups = _chunk_groups(datasets, config, mode, it)
        else:
            pairs = sample_patch_batch(
                datasets[chunk_only], config.batch, config.patch_lr,
                _derive_seed(config.seed, mode, chunk_only, it))
            groups = [(chunk_only, *_stack_nchw(pairs))]
        grads, loss = _step_grads(params, model.cafms, groups,
                                  shared_grads=shared_grads,
                                  cafm_grads=cafm_grads)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at iteration {it} ({mode})")
        opt.step(flat, grads, lr_at(config, it, total_steps))
        if config.eval_every and (it + 1) % config.eval_every == 0:
            _record(history, model, it + 1, loss, test_datasets)
    if total_steps and (not history or history[-1][0] != total_steps):
        _record(history, model, total_steps, loss, test_datasets)
    if checkpoint_dir is not None:
        save_checkpoint(model, opt, checkpoint_dir, total_steps,
                        config.kernel)
    return model, opt


def save_checkpoint(model, opt, out_dir, iteration, kernel):
    """ckpt_<iter>.bundle (delivery format) plus the optimizer state blob."""
    import os

    from .bundle import pack

    os.makedirs(out_dir, exist_ok=True)
    pack(model, {"kernel": kernel},
         path=os.path.join(out_dir, f"ckpt_{iteration}.bundle"))
    np.savez(os.path.join(out_dir, f"ckpt_{iteration}.opt.npz"),
             **opt.state_arrays())


# ---------------------------------------------------------------------------
# modes


def train_m0(datasets, config, backbone_config, test_datasets=None,
             checkpoint_dir=None):
    """One backbone for the whole video (all chunks merged).

    Runs the same stream as a separate model over one merged chunk, so a
    single-chunk video makes the two modes bit-identical; the step budget
    stays comparable to the sum of the per-chunk models (n x iterations).
    """
    if not isinstance(datasets, (list, tuple)):
        datasets = [datasets]
    merged = merge_datasets(list(datasets))
    merged.chunk_index = 0
    params = build_backbone(backbone_config, config.seed)
    steps = resolve_budget("m0", config.iterations, len(datasets))
    local = replace(config, seed=_derive_seed(config.seed, "separate", 0, 0))
    model, _ = _optimize(params, [], [merged], local, "separate", steps,
                         test_datasets=test_datasets,
                         checkpoint_dir=checkpoint_dir)
    return model


def train_separate(datasets, config, backbone_config, test_datasets=None,
                   checkpoint_dir=None):
    """Independent backbone per chunk; shared init seed, per-chunk data
    streams (seed, chunk)-derived so channels stay comparable."""
    out = []
    for ci, ds in enumerate(datasets):
        params = build_backbone(backbone_config, config.seed)
        local = replace(config, seed=_derive_seed(config.seed, "separate",
                                                  ci, 0))
        test = [test_datasets[ci]] if test_datasets else None
        solo = ChunkView(ds)
        ck = None if checkpoint_dir is None else f"{checkpoint_dir}/chunk{ci}"
        model, _ = _optimize(params, [], [solo], local, "separate",
                             config.iterations, test_datasets=test,
                             checkpoint_dir=ck)
        out.append(model)
    return out


def finetune_cafm(m0_model, datasets, config, test_datasets=None,
                  checkpoint_dir=None):
    """Freeze the m0 backbone, descend each chunk's modulation alone."""
    shared = clone_params(m0_model.shared)
    n = len(datasets)
    cafms = [
        make_identity_cafm(shared.config, config.kernel, chunk_index=ci)
        for ci in range(n)
    ]
    model = TrainedModel(shared=shared, cafms=cafms)
    views = [ChunkView(ds, index=ci) for ci, ds in enumerate(datasets)]
    opt = Adam(config.adam_betas, config.adam_eps)  # chunk keys are disjoint
    for ci in range(n):
        sub, _ = _optimize(shared, cafms, views, config, "ft",
                           config.iterations, shared_grads=False,
                           chunk_only=ci, opt=opt)
        offset = ci * config.iterations
        model.history.extend(
            (offset + it, loss, ps) for it, loss, ps in sub.history)
    if test_datasets:
        _, mean = model_psnrs(shared, cafms, test_datasets)
        total = n * config.iterations
        model.history.append((total, model.history[-1][1] if model.history
                              else float("nan"), mean))
    if checkpoint_dir is not None:
        save_checkpoint(model, opt, checkpoint_dir,
                        n * config.iterations, config.kernel)
    return model


def train_joint(datasets, config, backbone_config, test_datasets=None,
                checkpoint_dir=None):
    """Shared backbone plus all modulation sets, trained simultaneously.

    Chunks are drawn uniformly i.i.d. per batch element; shared weights see
    every sample, modulation set i sees only chunk i's samples.
    """
    n = len(datasets)
    params = build_backbone(backbone_config, config.seed)
    cafms = [
        make_identity_cafm(backbone_config, config.kernel, chunk_index=ci)
        for ci in range(n)
    ]
    views = [ChunkView(ds, index=ci) for ci, ds in enumerate(datasets)]
    steps = resolve_budget("joint", config.iterations, n)
    model, _ = _optimize(params, cafms, views, config, "joint", steps,
                         test_datasets=test_datasets,
                         checkpoint_dir=checkpoint_dir)
    return model


class ChunkView:
    """Dataset facade with a contiguous 0..n-1 index for batching."""

    def __init__(self, dataset, index=0):
        self.pairs = dataset.pairs
        self.scale = dataset.scale
        self.chunk_index = index
        self.role = dataset.role

    def __len__(self):
        return len(self.pairs)


def write_history_csv(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loss", "psnr_mean"])
        for it, loss, ps in history:
            writer.writerow([it, f"{loss:.8f}", f"{ps:.4f}"])
