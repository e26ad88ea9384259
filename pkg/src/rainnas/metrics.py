"""Forecast verification: continuous scores and categorical skill.

Rainfall levels 1..5 (None/Light/Moderate/Heavy/Violent) partition
[0, inf) at 0.1/10.1/25.1/50.1 mm/day with half-open bins, so a value
exactly on a boundary belongs to the upper level.  Categorical scores
run through the level-by-level contingency table indexed (observed i,
predicted j).  All scores pool every pixel of every sample into one
number; per-pixel maps are a separate export.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LEVEL_THRESHOLDS", "LEVEL_NAMES", "NUM_LEVELS",
    "bias", "mae", "rmse", "nse", "classify",
    "ContingencyTable", "contingency", "acc", "hss",
    "forecast_report", "pixel_metric_maps", "REPORT_COLUMNS",
]

LEVEL_THRESHOLDS = (0.1, 10.1, 25.1, 50.1)
LEVEL_NAMES = ("None", "Light", "Moderate", "Heavy", "Violent")
NUM_LEVELS = 5

REPORT_COLUMNS = ("bias", "mae", "rmse", "nse", "acc", "hss")


def _paired(pred, obs):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    obs = np.asarray(obs, dtype=np.float64).ravel()
    if pred.size != obs.size:
        raise ValueError(f"prediction and observation sizes differ: {pred.size} vs {obs.size}")
    if pred.size == 0:
        raise ValueError("empty grids")
    return pred, obs


def bias(obs, pred) -> float:
    """Ratio of total predicted to total observed rainfall (perfect = 1)."""
    pred, obs = _paired(pred, obs)
    total_obs = obs.sum()
    if total_obs == 0:
        raise ValueError("bias undefined: observation sum is zero")
    return float(pred.sum() / total_obs)


def mae(obs, pred) -> float:
    pred, obs = _paired(pred, obs)
    return float(np.abs(pred - obs).mean())


def rmse(obs, pred) -> float:
    pred, obs = _paired(pred, obs)
    return float(np.sqrt(((pred - obs) ** 2).mean()))


def nse(obs, pred) -> float:
    """1 minus error variance over observation variance (perfect = 1)."""
    pred, obs = _paired(pred, obs)
    denom = ((obs - obs.mean()) ** 2).sum()
    if denom == 0:
        raise ValueError("nse undefined: observations are constant")
    return float(1.0 - ((pred - obs) ** 2).sum() / denom)


def classify(grid) -> np.ndarray:
    """Hard-bin rainfall (mm/day) into levels 1..5."""
    grid = np.asarray(grid, dtype=np.float64)
    if (grid < 0).any():
        raise ValueError("classify expects nonnegative rainfall")
    return (np.digitize(grid, LEVEL_THRESHOLDS) + 1).astype(np.int64)


@dataclass
class ContingencyTable:
    n: np.ndarray   # (L, L) counts, row = observed level, column = predicted

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        if self.n.shape != (NUM_LEVELS, NUM_LEVELS):
            raise ValueError(f"contingency table must be {NUM_LEVELS}x{NUM_LEVELS}, "
                             f"got {self.n.shape}")
        if (self.n < 0).any():
            raise ValueError("contingency counts must be nonnegative")

    @property
    def row_sums(self) -> np.ndarray:
        return self.n.sum(axis=1)

    @property
    def col_sums(self) -> np.ndarray:
        return self.n.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.n.sum())


def contingency(obs_levels, pred_levels) -> ContingencyTable:
    obs = np.asarray(obs_levels, dtype=np.int64).ravel()
    pred = np.asarray(pred_levels, dtype=np.int64).ravel()
    if obs.size != pred.size:
        raise ValueError(f"level grids differ in size: {obs.size} vs {pred.size}")
    if ((obs < 1) | (obs > NUM_LEVELS) | (pred < 1) | (pred > NUM_LEVELS)).any():
        raise ValueError(f"levels must lie in 1..{NUM_LEVELS}")
    flat = (obs - 1) * NUM_LEVELS + (pred - 1)
    counts = np.bincount(flat, minlength=NUM_LEVELS * NUM_LEVELS)
    return ContingencyTable(counts.reshape(NUM_LEVELS, NUM_LEVELS))


def acc(table: ContingencyTable) -> float:
    """Fraction of cases on the table diagonal."""
    if table.total == 0:
        raise ValueError("acc undefined on an empty table")
    return float(np.trace(table.n) / table.total)


def hss(table: ContingencyTable) -> float:
    """Chance-corrected accuracy over the contingency table."""
    total = table.total
    if total == 0:
        raise ValueError("hss undefined on an empty table")
    chance = float((table.row_sums * table.col_sums).sum()) / (total * total)
    denom = 1.0 - chance
    if denom == 0:
        raise ValueError("hss undefined: degenerate marginals")
    return float((np.trace(table.n) / total - chance) / denom)


def forecast_report(obs, pred) -> dict[str, float]:
    """All six pooled scores for stacked grids of matching shape."""
    table = contingency(classify(obs), classify(pred))
    return {
        "bias": bias(obs, pred),
        "mae": mae(obs, pred),
        "rmse": rmse(obs, pred),
        "nse": nse(obs, pred),
        "acc": acc(table),
        "hss": hss(table),
    }


def pixel_metric_maps(obs, pred) -> dict[str, np.ndarray]:
    """Per-pixel MAE/RMSE/ACC/HSS maps across the sample axis.

    ``obs`` and ``pred`` are (n, H, W); pixels whose HSS denominator
    degenerates get NaN.
    """
    obs = np.asarray(obs, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if obs.shape != pred.shape or obs.ndim != 3:
        raise ValueError(f"expected matching (n, H, W) stacks, "
                         f"got {obs.shape} and {pred.shape}")
    n = obs.shape[0]
    err = pred - obs
    maps = {
        "mae": np.abs(err).mean(axis=0),
        "rmse": np.sqrt((err ** 2).mean(axis=0)),
    }
    obs_lv = classify(obs)
    pred_lv = classify(pred)
    acc_map = (obs_lv == pred_lv).mean(axis=0)
    hss_map = np.full(obs.shape[1:], np.nan)
    flat = (obs_lv - 1) * NUM_LEVELS + (pred_lv - 1)
    for r in range(obs.shape[1]):
        for c in range(obs.shape[2]):
            counts = np.bincount(flat[:, r, c], minlength=NUM_LEVELS * NUM_LEVELS)
            table = counts.reshape(NUM_LEVELS, NUM_LEVELS)
            chance = float((table.sum(1) * table.sum(0)).sum()) / (n * n)
            if chance != 1.0:
                hss_map[r, c] = (np.trace(table) / n - chance) / (1.0 - chance)
    maps["acc"] = acc_map
    maps["hss"] = hss_map
    return maps
