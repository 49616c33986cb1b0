"""Episode metrics and cross-episode aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .records import EpisodeRecord


@dataclass(frozen=True)
class Metrics:
    t_ab: int | None   # first step the bleeding pool's origin-tagged count hits zero
    t_50: int | None   # first step remaining fraction <= 0.5
    t_95: int | None   # first step remaining fraction <= 0.05
    ttpl: float        # summed tool tip displacement
    completed: bool

    def as_dict(self) -> dict:
        return {
            "t_ab": self.t_ab,
            "t_50": self.t_50,
            "t_95": self.t_95,
            "ttpl": self.ttpl,
            "completed": self.completed,
        }


def _first_crossing(series, threshold) -> int | None:
    for i, v in enumerate(series):
        if v <= threshold:
            return i
    return None


def compute_metrics(record: EpisodeRecord) -> Metrics:
    t50 = _first_crossing(record.fraction, 0.5)
    t95 = _first_crossing(record.fraction, 0.05)
    t_ab = None
    if any(v is not None for v in record.bleeding_active):
        for i, v in enumerate(record.bleeding_active):
            if v == 0:
                t_ab = i
                break
    tool = np.asarray(record.tool, dtype=float)
    ttpl = float(np.linalg.norm(np.diff(tool, axis=0), axis=1).sum()) if len(tool) > 1 else 0.0
    return Metrics(t_ab=t_ab, t_50=t50, t_95=t95, ttpl=ttpl, completed=record.completed)


METRIC_NAMES = ("t_ab", "t_50", "t_95", "ttpl")


def aggregate(records_by_cell: dict) -> dict:
    """Mean and sample (n-1) std per metric per (env, module) cell.

    records_by_cell maps (env_id, module) -> list[EpisodeRecord]. Metric
    values that never crossed their threshold are excluded and counted.
    """
    out = {}
    for (env_id, module), records in sorted(records_by_cell.items()):
        cell: dict = {"n": len(records)}
        metrics = [compute_metrics(r) for r in records]
        for name in METRIC_NAMES:
            values = [getattr(m, name) for m in metrics]
            present = [v for v in values if v is not None]
            entry: dict = {"missing": len(values) - len(present), "n": len(present)}
            if not present:
                entry.update({"mean": None, "std": None})
            else:
                entry["mean"] = float(np.mean(present))
                entry["std"] = float(np.std(present, ddof=1)) if len(present) > 1 else None
            cell[name] = entry
        out[f"env{env_id}/{module}"] = cell
    return out
