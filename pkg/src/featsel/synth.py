"""Synthetic multi-task datasets with planted channel relevance.

Each task output is a pixelwise mix of a known subset of smooth random
channel fields plus optional noise, so the ground-truth relevant set is
available for end-to-end checks. Per-channel scale factors are applied
to the *stored feature channels only*, which is exactly the stressor
that separates scale-invariant (MI) from scale-sensitive (norm)
importance criteria. A PSNR-style proxy accuracy stands in for real
task metrics.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import DomainError
from .tensor_store import (DatasetManifest, ManifestSample, save_manifest,
                           write_tensor)

PSNR_CAP_DB = 100.0  # reported for exact reconstructions


@dataclass
class SynthSpec:
    channels: int = 32
    height: int = 16
    width: int = 32
    tasks: int = 3
    relevant: list = field(default_factory=list)      # per task: channel ids
    mix_weights: list = field(default_factory=list)   # per task: weights
    noise_sigma: float = 0.0
    scales: list = field(default_factory=list)        # per channel, default 1.0
    corr_length: float = 2.0
    seed: int = 0
    samples: int = 200
    patch_n: int = 2
    patch_m: int = 2

    def __post_init__(self):
        if not self.relevant:
            # disjoint blocks of 4 channels, spread across the tensor
            self.relevant = [
                list(range(8 * j, 8 * j + 4)) for j in range(self.tasks)]
        if not self.mix_weights:
            self.mix_weights = [
                [1.0 - 0.15 * i for i in range(len(s))] for s in self.relevant]
        if not self.scales:
            self.scales = [1.0] * self.channels
        if len(self.scales) != self.channels:
            raise DomainError("scales must have one entry per channel")
        if any(s == 0 for s in self.scales):
            raise DomainError("scales must be nonzero")
        if self.noise_sigma < 0:
            raise DomainError("noise sigma must be >= 0")
        for j, s in enumerate(self.relevant):
            if not s or any(c < 0 or c >= self.channels for c in s):
                raise DomainError(f"task {j}: relevant set must be a nonempty "
                                  f"subset of 0..{self.channels - 1}")
            if len(self.mix_weights[j]) != len(s):
                raise DomainError(f"task {j}: one mix weight per relevant channel")
        if self.height % self.patch_n or self.width % self.patch_n:
            raise DomainError("feature size must be divisible by the patch side")

    def to_json(self):
        return {k: v for k, v in vars(self).items()}

    @classmethod
    def from_json(cls, doc):
        return cls(**doc)


def _smooth_field(rng, height, width, corr_length):
    field_ = gaussian_filter(rng.standard_normal((height, width)),
                             corr_length, mode="wrap")
    std = field_.std()
    return (field_ - field_.mean()) / (std if std > 0 else 1.0)


def generate_sample(spec: SynthSpec, sample_id):
    """Deterministic per-sample draw.

    Returns (channels (C,H,W) unscaled, clean outputs, noisy outputs),
    outputs keyed by task id.
    """
    rng = np.random.default_rng([spec.seed, int(sample_id)])
    channels = np.stack([
        _smooth_field(rng, spec.height, spec.width, spec.corr_length)
        for _ in range(spec.channels)])
    clean, noisy = {}, {}
    for j in range(spec.tasks):
        out = np.zeros((spec.height, spec.width))
        for c, w in zip(spec.relevant[j], spec.mix_weights[j]):
            out += w * channels[c]
        clean[j] = out
        noise = rng.standard_normal(out.shape) if spec.noise_sigma > 0 else 0.0
        noisy[j] = out + spec.noise_sigma * noise
    return channels, clean, noisy


def generate(spec: SynthSpec, out_dir):
    """Write the dataset (scaled features + noisy outputs) and its manifest."""
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "features"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "outputs"), exist_ok=True)
    scales = np.asarray(spec.scales, dtype=np.float64)
    samples = []
    for sid in range(spec.samples):
        channels, _, noisy = generate_sample(spec, sid)
        feat_rel = os.path.join("features", f"s{sid:04d}.ften")
        write_tensor((channels * scales[:, None, None]).astype(np.float32),
                     os.path.join(out_dir, feat_rel))
        outputs = {}
        for j in range(spec.tasks):
            out_rel = os.path.join("outputs", f"s{sid:04d}_t{j}.ften")
            write_tensor(noisy[j].astype(np.float32),
                         os.path.join(out_dir, out_rel))
            outputs[j] = out_rel
        samples.append(ManifestSample(sample_id=sid, features=feat_rel,
                                      outputs=outputs))
    manifest = DatasetManifest(base_dir=os.path.abspath(out_dir),
                               patch_n=spec.patch_n, patch_m=spec.patch_m,
                               tasks=list(range(spec.tasks)), samples=samples)
    path = os.path.join(out_dir, "manifest.json")
    save_manifest(manifest, path)
    return path


def psnr(reference, prediction):
    """PSNR in dB against the reference's value range, capped for exact matches."""
    reference = np.asarray(reference, dtype=np.float64)
    prediction = np.asarray(prediction, dtype=np.float64)
    if reference.shape != prediction.shape:
        raise DomainError(f"shape mismatch {reference.shape} vs {prediction.shape}")
    mse = float(((reference - prediction) ** 2).mean())
    rng = float(reference.max() - reference.min())
    if mse <= 0 or rng <= 0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(rng * rng / mse), PSNR_CAP_DB)


def proxy_accuracy(rec_features, spec: SynthSpec, task_id, sample_id) -> float:
    """PSNR of the task output regenerated from reconstructed feature channels.

    ``rec_features`` are in stored units, i.e. with per-channel scales
    applied; they are unscaled before mixing.
    """
    rec_features = np.asarray(rec_features, dtype=np.float64)
    if rec_features.shape != (spec.channels, spec.height, spec.width):
        raise DomainError(
            f"reconstructed tensor shape {rec_features.shape} does not match "
            f"spec ({spec.channels}, {spec.height}, {spec.width})")
    if not 0 <= task_id < spec.tasks:
        raise DomainError(f"unknown task {task_id}")
    _, clean, _ = generate_sample(spec, sample_id)
    scales = np.asarray(spec.scales, dtype=np.float64)
    pred = np.zeros((spec.height, spec.width))
    for c, w in zip(spec.relevant[task_id], spec.mix_weights[task_id]):
        pred += w * rec_features[c] / scales[c]
    return psnr(clean[task_id], pred)


def dataset_proxy_accuracy(reconstructions, spec: SynthSpec, task_id) -> float:
    """Mean proxy accuracy over (sample_id -> reconstructed features)."""
    vals = [proxy_accuracy(rec, spec, task_id, sid)
            for sid, rec in sorted(reconstructions.items())]
    if not vals:
        raise DomainError("no reconstructions given")
    return float(np.mean(vals))
