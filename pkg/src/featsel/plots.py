"""Matplotlib figure rendering for the report path.

Every CLI report that emits delimited output can also render a figure
next to it. Figures are written with fixed metadata so reruns are
byte-identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = dict(dpi=120, metadata={"Software": "featsel"})


def plot_validation(records, path, title="Estimated vs. true MI"):
    """Fig-2-style curves: estimate vs correlation, one line per K."""
    records = sorted(records, key=lambda r: (r.K, r.rho, r.repeat_index))
    fig, ax = plt.subplots(figsize=(6, 4))
    ks = sorted({r.K for r in records})
    rhos = sorted({r.rho for r in records})
    for k in ks:
        ests = []
        for rho in rhos:
            cell = [r.estimate_nats for r in records if r.K == k and r.rho == rho]
            ests.append(np.mean(cell))
        ax.plot(rhos, ests, marker="o", ms=3, label=f"K={k}")
    truth = {r.rho: r.true_mi_nats for r in records}
    ax.plot(rhos, [truth[r] for r in rhos], "k--", label="true (patched)")
    if any(r.true_2d_nats is not None for r in records):
        truth2 = {r.rho: r.true_2d_nats for r in records if r.true_2d_nats is not None}
        ax.plot(rhos, [truth2[r] for r in rhos], "k:", label="true (full)")
    ax.set_xlabel(r"correlation $\rho$")
    ax.set_ylabel("MI [nats]")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_rate_distortion(points, path, ylabel="proxy accuracy [dB]",
                         title="Rate vs. task accuracy"):
    """points: list of (label, bytes, accuracy) tuples, grouped by label."""
    fig, ax = plt.subplots(figsize=(6, 4))
    labels = sorted({p[0] for p in points})
    for lab in labels:
        sel = sorted((b, a) for (l, b, a) in points if l == lab)
        ax.plot([b / 1024 for b, _ in sel], [a for _, a in sel],
                marker="o", ms=4, label=str(lab))
    ax.set_xlabel("payload size [KiB]")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def simplex_to_xy(weights):
    """Barycentric (w1, w2, w3) -> 2-D triangle coordinates."""
    w = np.asarray(weights)
    x = w[:, 1] + 0.5 * w[:, 2]
    y = (np.sqrt(3) / 2) * w[:, 2]
    return x, y


def plot_simplex(winner_map, path, title="Lowest-total-distortion criterion"):
    fig, ax = plt.subplots(figsize=(5.5, 5))
    x, y = simplex_to_xy(winner_map.weights)
    labels = list(winner_map.criteria) + ["tie"]
    cmap = plt.get_cmap("tab10")
    for i, lab in enumerate(labels):
        mask = np.array([w == lab for w in winner_map.winners])
        if mask.any():
            frac = winner_map.win_fractions.get(lab, 0.0)
            ax.scatter(x[mask], y[mask], s=6, color=cmap(i),
                       label=f"{lab} ({100 * frac:.1f}%)")
    for (vx, vy), name in zip([(0, 0), (1, 0), (0.5, np.sqrt(3) / 2)],
                              ["$w_1$", "$w_2$", "$w_3$"]):
        ax.annotate(name, (vx, vy), ha="center",
                    xytext=(vx, vy + (0.03 if vy else -0.06)))
    ax.set_aspect("equal")
    ax.set_axis_off()
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8, markerscale=2)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
