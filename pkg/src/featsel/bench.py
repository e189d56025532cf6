"""End-to-end synthetic benchmark: rank, select, compress, score.

Produces the accuracy CSV consumed by the multi-objective tools plus a
payload-size table for rate-distortion reporting. Hard-selection
accuracies follow the reference protocol: retained channels are 8-bit
quantized, dropped channels are zero.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from . import codec, importance, synth
from .errors import DomainError
from .tensor_store import load_manifest

DEFAULT_KEEP_FRACTIONS = (1.0, 0.9375, 0.875, 0.75, 0.5)
DEFAULT_QPS = (10, 20, 30, 40)


@dataclass
class BenchmarkResult:
    spec: synth.SynthSpec
    manifest_path: str
    tables: dict                 # criterion -> {task_id -> ImportanceTable}
    accuracies: list = field(default_factory=list)  # rows for the ingestion CSV
    sizes: list = field(default_factory=list)       # (criterion, keep, qp, mean bytes)


def _hard_recon(values, ordering, keep):
    plan = codec.SelectionPlan(ordering=ordering, mode="hard", keep_count=keep)
    _, recon = codec.hard_select(values, plan)
    kept = ordering[:keep]
    q = codec.quantize8(recon[kept])
    recon = recon.copy()
    recon[kept] = codec.dequantize8(q)
    return recon


def _soft_recon(values, ordering, keep, qp):
    plan = codec.SelectionPlan(ordering=ordering, mode="soft",
                               keep_count=keep, qp=qp)
    payload = codec.soft_select(values, plan)
    return codec.reconstruct(payload), payload.total_bytes


def run_benchmark(spec: synth.SynthSpec, out_dir,
                  keep_fractions=DEFAULT_KEEP_FRACTIONS,
                  qps=DEFAULT_QPS, criteria=("mi", "l2"),
                  k=8, bins=8, seed=0, soft_keep_fractions=(0.5,)) -> BenchmarkResult:
    """Generate (or reuse) the dataset and score every selection setting."""
    manifest_path = os.path.join(out_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        manifest_path = synth.generate(spec, out_dir)
    manifest = load_manifest(manifest_path)
    features = [manifest.feature_tensor(s).values for s in manifest.samples]
    clean = {j: [] for j in range(spec.tasks)}
    for sid in range(spec.samples):
        _, c, _ = synth.generate_sample(spec, sid)
        for j in range(spec.tasks):
            clean[j].append(c[j])

    tables = {}
    for crit in criteria:
        if crit == "mi":
            tables[crit] = {
                j: importance.mi_importance(manifest, j, k=k, bins=bins, seed=seed)
                for j in range(spec.tasks)}
        elif crit in ("l1", "l2"):
            table = importance.norm_importance(manifest, int(crit[1]))
            tables[crit] = {j: table for j in range(spec.tasks)}
        elif crit == "gm":
            table = importance.gm_importance(manifest)
            tables[crit] = {j: table for j in range(spec.tasks)}
        else:
            raise DomainError(f"unknown criterion {crit!r}")

    scales = np.asarray(spec.scales, dtype=np.float64)

    def mean_proxy(task, recon_fn):
        vals = []
        for sid, values in enumerate(features):
            rec = recon_fn(values)
            pred = np.zeros((spec.height, spec.width))
            for c, w in zip(spec.relevant[task], spec.mix_weights[task]):
                pred += w * rec[c] / scales[c]
            vals.append(synth.psnr(clean[task][sid], pred))
        return float(np.mean(vals))

    result = BenchmarkResult(spec=spec, manifest_path=manifest_path, tables=tables)
    rows = result.accuracies
    c_total = spec.channels
    for j in range(spec.tasks):
        full = mean_proxy(j, lambda v: v)
        rows.append(dict(task_id=j, metric="proxy", direction="higher-better",
                         criterion="full", keep_count=c_total, qp="", accuracy=full))

    keep_counts = sorted({codec.resolve_keep_count(c_total, f) for f in keep_fractions},
                         reverse=True)
    soft_keeps = sorted({codec.resolve_keep_count(c_total, f) for f in soft_keep_fractions},
                        reverse=True)
    for crit in criteria:
        for j in range(spec.tasks):
            ordering = tables[crit][j].ordering
            for keep in keep_counts:
                acc = mean_proxy(j, lambda v: _hard_recon(v, ordering, keep))
                rows.append(dict(task_id=j, metric="proxy", direction="higher-better",
                                 criterion=crit, keep_count=keep, qp="", accuracy=acc))
            for keep in soft_keeps:
                if keep >= c_total:
                    continue
                for qp in qps:
                    sizes = []

                    def soft_fn(v):
                        rec, nbytes = _soft_recon(v, ordering, keep, qp)
                        sizes.append(nbytes)
                        return rec

                    acc = mean_proxy(j, soft_fn)
                    rows.append(dict(task_id=j, metric="proxy",
                                     direction="higher-better", criterion=crit,
                                     keep_count=keep, qp=qp, accuracy=acc))
                    result.sizes.append((crit, keep, qp, float(np.mean(sizes))))
    return result


def write_accuracy_csv(result: BenchmarkResult, path):
    fields = ["task_id", "metric", "direction", "criterion",
              "keep_count", "qp", "accuracy"]
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in result.accuracies:
            out = dict(row)
            out["accuracy"] = f"{row['accuracy']:.10g}"
            writer.writerow(out)
    os.replace(tmp, path)


def write_sizes_csv(result: BenchmarkResult, path):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["criterion", "keep_count", "qp", "mean_bytes"])
        for crit, keep, qp, nbytes in result.sizes:
            writer.writerow([crit, keep, qp, f"{nbytes:.10g}"])
    os.replace(tmp, path)
