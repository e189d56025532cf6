"""Task distortions, weighted totals, and winner maps over the task-weight simplex.

Accuracies arrive through a CSV/JSON ingestion boundary; this module
never computes task metrics itself. Distortion is the relative accuracy
change |A_full - A_sel| / A_full, totals are weighted sums over tasks,
and the simplex sweep rasterizes which selection criterion attains the
lowest total at each barycentric weight triple.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

TIE = "tie"
TIE_EPS = 1e-12
WEIGHT_TOL = 1e-9


@dataclass
class AccuracyRecord:
    """Accuracies of one task under one selection criterion."""

    task_id: int
    metric: str                  # e.g. mIoU, RMSE, PSNR, proxy
    direction: str               # "higher-better" or "lower-better"
    a_full: float                # accuracy with all channels
    a_selected: dict = field(default_factory=dict)  # (keep_count, qp|None) -> accuracy

    def __post_init__(self):
        if not np.isfinite(self.a_full) or self.a_full == 0:
            raise DomainError("baseline accuracy must be finite and nonzero")
        if self.direction not in ("higher-better", "lower-better"):
            raise DomainError(f"bad direction {self.direction!r}")


def task_distortion(rec: AccuracyRecord, key) -> float:
    """Relative accuracy change |A_full - A_sel| / A_full.

    The absolute value means an accuracy *improvement* is penalized the
    same as a drop; that is deliberate and applies to lower-better
    metrics unchanged.
    """
    if key not in rec.a_selected:
        raise DomainError(f"no accuracy recorded for key {key} (task {rec.task_id})")
    a_sel = rec.a_selected[key]
    if not np.isfinite(a_sel):
        raise DomainError(f"non-finite accuracy for key {key}")
    return abs(rec.a_full - a_sel) / abs(rec.a_full)


def total_distortion(distortions, weights) -> float:
    """Weighted sum of per-task distortions; weights must lie on the simplex."""
    distortions = np.asarray(distortions, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if distortions.shape != weights.shape:
        raise DomainError("distortions and weights must have equal length")
    if np.any(weights < 0):
        raise DomainError("weights must be nonnegative")
    if abs(weights.sum() - 1.0) > WEIGHT_TOL:
        raise DomainError(f"weights must sum to 1, got {weights.sum()}")
    return float(np.dot(weights, distortions))


def simplex_grid(resolution):
    """All barycentric triples (i/r, j/r, k/r) with i+j+k = r, ordered by (i, j)."""
    if resolution < 1:
        raise DomainError("resolution must be >= 1")
    r = resolution
    grid = []
    for i in range(r + 1):
        for j in range(r + 1 - i):
            grid.append((i / r, j / r, (r - i - j) / r))
    return np.array(grid)


@dataclass
class SimplexWinnerMap:
    resolution: int
    criteria: list
    weights: np.ndarray          # (P, 3)
    winners: list                # criterion label or "tie" per grid point
    win_fractions: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.win_fractions:
            labels = list(self.criteria) + [TIE]
            n = len(self.winners)
            self.win_fractions = {
                lab: self.winners.count(lab) / n for lab in labels}


def sweep_simplex(records, criteria, key, resolution=100) -> SimplexWinnerMap:
    """Winner map over the 3-task weight simplex.

    ``records`` maps criterion -> {task_id -> AccuracyRecord}; each
    criterion is judged on its *own* per-task orderings, i.e. its own
    accuracy entries at ``key``. Ties (within 1e-12) get the label "tie".
    """
    criteria = list(criteria)
    if len(criteria) < 2:
        raise DomainError("need at least 2 criteria to compare")
    task_ids = None
    per_criterion = {}
    for c in criteria:
        if c not in records:
            raise DomainError(f"missing accuracy records for criterion {c!r}")
        ids = sorted(records[c])
        if task_ids is None:
            task_ids = ids
        elif ids != task_ids:
            raise DomainError(f"criterion {c!r} covers tasks {ids}, expected {task_ids}")
        try:
            per_criterion[c] = np.array(
                [task_distortion(records[c][t], key) for t in task_ids])
        except DomainError as e:
            raise DomainError(f"criterion {c!r}: {e}") from e
    if len(task_ids) != 3:
        raise DomainError(f"simplex sweep needs exactly 3 tasks, got {len(task_ids)}")

    weights = simplex_grid(resolution)
    totals = np.stack([weights @ per_criterion[c] for c in criteria], axis=1)
    best = totals.min(axis=1)
    winners = []
    for row, b in zip(totals, best):
        tied = np.nonzero(row <= b + TIE_EPS)[0]
        winners.append(TIE if len(tied) > 1 else criteria[tied[0]])
    return SimplexWinnerMap(resolution=resolution, criteria=criteria,
                            weights=weights, winners=winners)


# ---------------------------------------------------------------------------
# ingestion


def _parse_key(keep_count, qp):
    qp = None if qp in (None, "", "na") else int(qp)
    return (int(keep_count), qp)


def load_accuracy_csv(path):
    """Read the accuracy ingestion CSV.

    Columns: task_id, metric, direction, criterion, keep_count, qp,
    accuracy. Rows with criterion "full" define the all-channels
    baseline for their task. Returns criterion -> {task_id -> AccuracyRecord}.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            rows.append(row)
    baselines = {}
    for row in rows:
        if row["criterion"] == "full":
            baselines[int(row["task_id"])] = (
                float(row["accuracy"]), row["metric"], row["direction"])
    records = {}
    for row in rows:
        crit = row["criterion"]
        if crit == "full":
            continue
        task = int(row["task_id"])
        if task not in baselines:
            raise DomainError(f"no 'full' baseline row for task {task}")
        a_full, metric, direction = baselines[task]
        rec = records.setdefault(crit, {}).setdefault(
            task, AccuracyRecord(task_id=task, metric=metric,
                                 direction=direction, a_full=a_full))
        rec.a_selected[_parse_key(row["keep_count"], row.get("qp"))] = float(row["accuracy"])
    return records
