"""Patch / cluster / bin mutual-information estimator core.

The pipeline: output images are cut into M x M patches and vector-quantized
with K-means; feature maps are cut into N x N patches, each dimension is
quantized into B equal-width bins over the channel's dataset-global range,
and the bin tuple is reduced to one discrete symbol. Plug-in discrete MI
between feature symbols and cluster labels is the channel's score.

Patching and clustering both discard information, so the estimate is a
lower bound on the underlying MI; what matters downstream is that the
bound preserves the ordering of channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

# ---------------------------------------------------------------------------
# patching


@dataclass
class PatchSet:
    """Flattened non-overlapping patches pooled from one source."""

    source_id: int
    patch_side: int
    patches: np.ndarray                       # (P, d)
    origins: list = field(default_factory=list)  # (sample_id, grid_row, grid_col)


def extract_patches(values, side):
    """Cut a (C, H, W) array into flattened side x side patches.

    Returns (P, C * side * side) with patches in row-major grid order;
    multi-channel values are concatenated channel-first within a patch.
    """
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[None]
    c, h, w = values.shape
    if h % side != 0:
        raise DomainError(f"height {h} not divisible by patch side {side}")
    if w % side != 0:
        raise DomainError(f"width {w} not divisible by patch side {side}")
    gh, gw = h // side, w // side
    # (C, gh, side, gw, side) -> (gh, gw, C, side, side)
    p = values.reshape(c, gh, side, gw, side).transpose(1, 3, 0, 2, 4)
    return p.reshape(gh * gw, c * side * side)


def assemble_patches(patches, grid_shape, side, channels=1):
    """Inverse of extract_patches for a single sample."""
    gh, gw = grid_shape
    p = np.asarray(patches).reshape(gh, gw, channels, side, side)
    return p.transpose(2, 0, 3, 1, 4).reshape(channels, gh * side, gw * side)


def patchify(values, side, source_id=0, sample_id=0) -> PatchSet:
    """PatchSet for one sample, with per-patch grid origins recorded."""
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[None]
    patches = extract_patches(values, side)
    gh, gw = values.shape[1] // side, values.shape[2] // side
    origins = [(sample_id, r, c) for r in range(gh) for c in range(gw)]
    return PatchSet(source_id=source_id, patch_side=side, patches=patches, origins=origins)


# ---------------------------------------------------------------------------
# K-means (Lloyd + k-means++), deterministic per seed


@dataclass
class ClusterModel:
    K: int
    centroids: np.ndarray        # (K, d)
    labels: np.ndarray           # (P,)
    inertia: float
    seed: int
    inertia_trace: list = field(default_factory=list)


def _plusplus_init(points, k, rng):
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[rng.integers(n)]
    d2 = np.full(n, np.inf)
    for i in range(1, k):
        d2 = np.minimum(d2, ((points - centroids[i - 1]) ** 2).sum(axis=1))
        total = d2.sum()
        if total <= 0:
            centroids[i] = points[rng.integers(n)]
            continue
        centroids[i] = points[rng.choice(n, p=d2 / total)]
    return centroids


def _assign(points, centroids):
    # ||x - c||^2 up to the constant ||x||^2; argmin ties go to the lowest index
    d = (centroids ** 2).sum(axis=1)[None, :] - 2.0 * points @ centroids.T
    return d.argmin(axis=1)


def _inertia(points, centroids, labels):
    return float(((points - centroids[labels]) ** 2).sum())


def kmeans(points, k, seed=0, max_iters=300, tol=1e-6) -> ClusterModel:
    """Lloyd's algorithm with k-means++ initialization.

    Empty clusters are re-seeded at the point farthest from its current
    centroid. 1-D inputs use a sorted fast path; labels there are ordered
    by centroid position, which only relabels clusters (MI and inertia
    are unaffected).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n, d = points.shape
    if k < 1:
        raise DomainError("cluster count must be >= 1")
    if k > n:
        raise DomainError(f"cluster count {k} exceeds point count {n}")
    rng = np.random.default_rng(seed)
    if d == 1:
        return _kmeans_1d(points[:, 0], k, seed, rng, max_iters, tol)

    centroids = _plusplus_init(points, k, rng)
    labels = _assign(points, centroids)
    trace = []
    for _ in range(max_iters):
        new_centroids = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        occupied = counts > 0
        new_centroids[occupied] = sums[occupied] / counts[occupied, None]
        for idx in np.nonzero(~occupied)[0]:
            far = ((points - new_centroids[labels]) ** 2).sum(axis=1).argmax()
            new_centroids[idx] = points[far]
        shift = np.abs(new_centroids - centroids).max()
        centroids = new_centroids
        labels = _assign(points, centroids)
        trace.append(_inertia(points, centroids, labels))
        if shift < tol:
            break
    return ClusterModel(K=k, centroids=centroids, labels=labels,
                        inertia=trace[-1] if trace else _inertia(points, centroids, labels),
                        seed=seed, inertia_trace=trace)


def _kmeans_1d(x, k, seed, rng, max_iters, tol):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    centroids = np.sort(_plusplus_init(xs[:, None], k, rng)[:, 0])
    csum = np.concatenate([[0.0], np.cumsum(xs)])
    trace = []
    for _ in range(max_iters):
        bounds = (centroids[:-1] + centroids[1:]) / 2.0
        edges = np.searchsorted(xs, bounds, side="left")
        edges = np.concatenate([[0], edges, [len(xs)]])
        new_centroids = centroids.copy()
        for i in range(k):
            lo, hi = edges[i], edges[i + 1]
            if hi > lo:
                new_centroids[i] = (csum[hi] - csum[lo]) / (hi - lo)
            else:
                # empty segment: re-seed at the point farthest from its centroid
                lab = np.searchsorted(bounds, xs, side="left")
                far = np.argmax(np.abs(xs - centroids[lab]))
                new_centroids[i] = xs[far]
        new_centroids = np.sort(new_centroids)
        shift = np.abs(new_centroids - centroids).max()
        centroids = new_centroids
        if shift < tol:
            break
    bounds = (centroids[:-1] + centroids[1:]) / 2.0
    labels_sorted = np.searchsorted(bounds, xs, side="left")
    labels = np.empty(len(x), dtype=np.int64)
    labels[order] = labels_sorted
    inertia = float(((x - centroids[labels]) ** 2).sum())
    trace.append(inertia)
    return ClusterModel(K=k, centroids=centroids[:, None], labels=labels,
                        inertia=inertia, seed=seed, inertia_trace=trace)


def predict(model: ClusterModel, points):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    return _assign(points, model.centroids)


# ---------------------------------------------------------------------------
# binning


@dataclass
class BinningConfig:
    bins: int = 8
    exact: bool = False  # exact tuple->symbol map instead of the 64-bit hash


_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


def _hash_rows(idx):
    """FNV-1a over each row of an integer matrix (vectorized over rows)."""
    h = np.full(idx.shape[0], _FNV_OFFSET, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(idx.shape[1]):
            h = (h ^ idx[:, j].astype(np.uint64)) * _FNV_PRIME
    return h


def bin_indices(values, lo, hi, bins):
    """Equal-width bin index per value: floor(B * (v - lo) / (hi - lo)), clamped."""
    if bins < 2:
        raise DomainError("bin count must be >= 2")
    values = np.asarray(values, dtype=np.float64)
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.int64)
    idx = np.floor(bins * (values - lo) / (hi - lo)).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def bin_patches(patches, lo, hi, cfg: BinningConfig):
    """Map each patch to one discrete symbol.

    Per-dimension equal-width binning over [lo, hi] (the channel's
    dataset-global range), then the bin tuple is collapsed either through
    an exact unique-row map or the documented FNV-1a 64-bit hash.
    A constant channel (hi == lo) collapses to a single symbol.
    """
    patches = np.asarray(patches)
    if patches.ndim == 1:
        patches = patches[:, None]
    idx = bin_indices(patches, lo, hi, cfg.bins)
    if cfg.exact:
        _, symbols = np.unique(idx, axis=0, return_inverse=True)
        return symbols.astype(np.int64)
    return _hash_rows(idx)


# ---------------------------------------------------------------------------
# plug-in MI


def _as_dense(symbols):
    _, inv = np.unique(symbols, return_inverse=True)
    return inv


def entropy(symbols):
    """Empirical entropy in nats of a discrete sample."""
    _, counts = np.unique(symbols, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def plugin_mi(symbols_x, labels_y):
    """Plug-in estimate of I(X;Y) in nats from paired discrete samples."""
    symbols_x = np.asarray(symbols_x).ravel()
    labels_y = np.asarray(labels_y).ravel()
    if len(symbols_x) != len(labels_y):
        raise DomainError(
            f"sequence lengths differ: {len(symbols_x)} vs {len(labels_y)}")
    if len(symbols_x) == 0:
        raise DomainError("empty sequences")
    xi = _as_dense(symbols_x)
    yi = _as_dense(labels_y)
    nx = int(xi.max()) + 1
    ny = int(yi.max()) + 1
    joint = np.bincount(xi * ny + yi, minlength=nx * ny).reshape(nx, ny)
    p = joint / joint.sum()
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    nz = p > 0
    mi = float((p[nz] * np.log(p[nz] / np.outer(px, py)[nz])).sum())
    return max(mi, 0.0)
