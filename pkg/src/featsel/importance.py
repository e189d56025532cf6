"""Per-channel importance scoring and the sorted selection ordering.

Four criteria: task-aware MI (the patch/cluster/bin estimate between a
channel and a task output), and three task-free baselines -- mean l1
norm, mean l2 norm, and distance from the geometric median of the
channel representatives. All orderings are descending by score with
ties broken by ascending channel id, so results are platform-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from . import mi_core
from .tensor_store import DatasetManifest


@dataclass
class ImportanceTable:
    criterion: str                  # "mi", "l1", "l2" or "gm"
    scores: dict                    # channel_id -> score
    ordering: list = field(default_factory=list)
    task_id: int | None = None      # MI only; norm/GM criteria are task-free

    def __post_init__(self):
        if not self.ordering:
            self.ordering = rank_order(self.scores)
        if sorted(self.ordering) != sorted(self.scores):
            raise DomainError("ordering must be a permutation of the channel ids")

    def to_json(self):
        return {
            "criterion": self.criterion,
            "task_id": self.task_id,
            "scores": {str(c): float(s) for c, s in self.scores.items()},
            "ordering": [int(c) for c in self.ordering],
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            criterion=doc["criterion"],
            task_id=doc.get("task_id"),
            scores={int(c): float(s) for c, s in doc["scores"].items()},
            ordering=[int(c) for c in doc["ordering"]],
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_json(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(json.load(f))


def rank_order(scores):
    """Channel ids sorted by descending score, ties by ascending id."""
    return [c for c, _ in sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))]


def _load_features(manifest: DatasetManifest):
    stack = [manifest.feature_tensor(s).values for s in manifest.samples]
    if not stack:
        raise DomainError("manifest has no samples")
    return np.stack(stack)  # (S, C, H, W)


def cluster_task_outputs(manifest: DatasetManifest, task_id, k, seed=0):
    """Pool all M x M output patches of one task and cluster them once."""
    if task_id not in manifest.tasks:
        raise DomainError(f"task {task_id} not in manifest tasks {manifest.tasks}")
    pools = []
    for s in manifest.samples:
        out = manifest.task_output(s, task_id)
        pools.append(mi_core.extract_patches(out.values, manifest.patch_m))
    return mi_core.kmeans(np.concatenate(pools), k, seed=seed)


def mi_importance(manifest: DatasetManifest, task_id, k=8, bins=8, seed=0,
                  exact_symbols=False) -> ImportanceTable:
    """Score each channel by its estimated MI with one task's output.

    The task's output patches are clustered once and the labels reused
    for every channel; per-channel feature patches are binned over the
    channel's dataset-global range.
    """
    model = cluster_task_outputs(manifest, task_id, k, seed=seed)
    features = _load_features(manifest)  # (S, C, H, W)
    n = manifest.patch_n
    cfg = mi_core.BinningConfig(bins=bins, exact=exact_symbols)
    scores = {}
    for ci in range(features.shape[1]):
        channel = features[:, ci]  # (S, H, W)
        patches = np.concatenate(
            [mi_core.extract_patches(img, n) for img in channel])
        symbols = mi_core.bin_patches(
            patches, float(channel.min()), float(channel.max()), cfg)
        scores[ci] = mi_core.plugin_mi(symbols, model.labels)
    return ImportanceTable(criterion="mi", task_id=task_id, scores=scores)


def channel_norm(values, p):
    """lp norm of one channel map (flattened)."""
    if p not in (1, 2):
        raise DomainError(f"only l1 and l2 norms are supported, got p={p}")
    return float(np.linalg.norm(np.asarray(values, dtype=np.float64).ravel(), ord=p))


def norm_importance(manifest: DatasetManifest, p) -> ImportanceTable:
    """Mean per-sample lp norm of each channel; task-independent."""
    features = _load_features(manifest)
    scores = {}
    for ci in range(features.shape[1]):
        norms = [channel_norm(img, p) for img in features[:, ci]]
        scores[ci] = float(np.mean(norms))
    return ImportanceTable(criterion=f"l{p}", scores=scores)


def geometric_median(points, tol=1e-9, max_iters=1000):
    """Weiszfeld iteration from the centroid.

    An iterate landing on (or within eps of) a data point gets that
    point's weight capped via a distance floor, which nudges the iterate
    off the singularity and lets the iteration continue.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise DomainError("points must be a non-empty 2-D array")
    y = points.mean(axis=0)
    scale = float(np.abs(points).max()) or 1.0
    eps = 1e-12 * scale
    for _ in range(max_iters):
        d = np.linalg.norm(points - y, axis=1)
        w = 1.0 / np.maximum(d, eps)
        y_new = (points * w[:, None]).sum(axis=0) / w.sum()
        move = np.linalg.norm(y_new - y)
        y = y_new
        if move <= tol * max(scale, 1e-30):
            break
    return y


def gm_importance(manifest: DatasetManifest, tol=1e-9, max_iters=1000) -> ImportanceTable:
    """Distance of each channel's dataset-mean map from their geometric median.

    Channels close to the median look redundant and score low; outliers
    score high.
    """
    features = _load_features(manifest)
    if features.shape[1] < 2:
        raise DomainError("geometric-median criterion needs at least 2 channels")
    reps = features.mean(axis=0).reshape(features.shape[1], -1)
    g = geometric_median(reps, tol=tol, max_iters=max_iters)
    scores = {ci: float(np.linalg.norm(reps[ci] - g)) for ci in range(len(reps))}
    return ImportanceTable(criterion="gm", scores=scores)
