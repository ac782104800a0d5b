"""Cross-model feature-map cosine-distance analysis.

Feeding one probe image through models trained on different chunks, the
distance between corresponding channels (the matrix diagonal) stays much
smaller than between unrelated channels, which is what justifies sharing
the backbone and privatizing only a per-channel modulation.
"""

import csv
import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import AnalysisError, ShapeError
from .models import extract_features, layer_manifest

logger = logging.getLogger(__name__)


@dataclass
class DistanceMatrix:
    values: np.ndarray  # C x C
    model_pair: tuple
    layer: int


def cosine_distance(u, v):
    """1 - cos(u, v); zero vectors are treated as maximally distant (1.0)."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ShapeError(f"length mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        logger.warning("cosine distance against a zero feature; counting 1.0")
        return 1.0
    return max(0.0, 1.0 - float(u @ v) / (nu * nv))


def _coerce(model):
    """Accepts TrainedModel, BackboneParams, or (params, cafm)."""
    if isinstance(model, tuple):
        return model
    shared = getattr(model, "shared", model)
    cafms = getattr(model, "cafms", None)
    return shared, (cafms[0] if cafms else None)


def _check_same_arch(models):
    params = [_coerce(m)[0] for m in models]
    base = params[0].config
    for p in params[1:]:
        if p.config != base:
            raise AnalysisError(
                f"models have different architectures: {p.config} vs {base}")
    return base


def n_modulated_layers(config):
    return sum(1 for s in layer_manifest(config) if s.modulated)


def _layer_features(model, probe, layer, model_index):
    shared, cafm = _coerce(model)
    fm = extract_features(shared, cafm, probe, [layer], model_index)[0]
    c = fm.data.shape[0]
    return fm.data.reshape(c, -1)


def pair_distance_matrix(m1, m2, probe, layer, pair=(0, 1)):
    _check_same_arch([m1, m2])
    f1 = _layer_features(m1, probe, layer, pair[0])
    f2 = _layer_features(m2, probe, layer, pair[1])
    c = f1.shape[0]
    values = np.empty((c, c))
    for j1 in range(c):
        for j2 in range(c):
            values[j1, j2] = cosine_distance(f1[j1], f2[j2])
    return DistanceMatrix(values=values, model_pair=pair, layer=layer)


def distance_matrix(models, probe, layer):
    """One C x C matrix per unordered model pair at the given layer."""
    if len(models) < 2:
        raise AnalysisError("need at least two models to compare")
    _check_same_arch(models)
    return [
        pair_distance_matrix(models[i1], models[i2], probe, layer, (i1, i2))
        for i1, i2 in combinations(range(len(models)), 2)
    ]


def diagonal_stats(models, probe, layers=None):
    """(diag mean, off-diag mean) over all pairs and modulated layers."""
    config = _check_same_arch(models)
    if layers is None:
        layers = range(n_modulated_layers(config))
    diag, off = [], []
    for layer in layers:
        for mat in distance_matrix(models, probe, layer):
            v = mat.values
            diag.extend(np.diag(v))
            mask = ~np.eye(v.shape[0], dtype=bool)
            off.extend(v[mask])
    return float(np.mean(diag)), float(np.mean(off))


def average_diagonal(models, probe, layers=None):
    """Mean diagonal distance over all modulated layers and model pairs."""
    return diagonal_stats(models, probe, layers)[0]


def write_distances_csv(path, models, probe, layers=None):
    config = _check_same_arch(models)
    if layers is None:
        layers = range(n_modulated_layers(config))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "layer", "diag_mean", "offdiag_mean"])
        for layer in layers:
            for mat in distance_matrix(models, probe, layer):
                v = mat.values
                mask = ~np.eye(v.shape[0], dtype=bool)
                writer.writerow([
                    f"{mat.model_pair[0]}-{mat.model_pair[1]}", layer,
                    f"{np.diag(v).mean():.6f}", f"{v[mask].mean():.6f}",
                ])


def save_heatmaps(out_dir, models, probe, layers=None):
    import os

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    config = _check_same_arch(models)
    if layers is None:
        layers = range(n_modulated_layers(config))
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for layer in layers:
        for mat in distance_matrix(models, probe, layer):
            fig, ax = plt.subplots(figsize=(4, 3.5))
            im = ax.imshow(mat.values, cmap="viridis", vmin=0.0)
            ax.set_xlabel(f"model {mat.model_pair[1]} channels")
            ax.set_ylabel(f"model {mat.model_pair[0]} channels")
            fig.colorbar(im, ax=ax)
            name = (f"dist_pair{mat.model_pair[0]}-{mat.model_pair[1]}"
                    f"_layer{layer}.png")
            fig.tight_layout()
            fig.savefig(os.path.join(out_dir, name), dpi=110)
            plt.close(fig)
            written.append(name)
    return written
