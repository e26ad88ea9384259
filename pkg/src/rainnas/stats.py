"""Predictive-accuracy comparison between two per-sample loss series."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

__all__ = ["DMResult", "dm_test", "normal_cdf", "per_sample_mse"]


class DMResult(NamedTuple):
    statistic: float
    prob: float


def normal_cdf(z: float) -> float:
    """Standard normal CDF via erf."""
    if not math.isfinite(z):
        raise ValueError(f"normal_cdf needs a finite argument, got {z}")
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def dm_test(loss_a, loss_b, h: int = 1) -> DMResult:
    """Diebold-Mariano statistic on the loss differential d = loss_a - loss_b.

    The statistic is mean(d) over sqrt((gamma_0 + 2*sum_{k<h} gamma_k)/T)
    with sample autocovariances gamma_k; a positive value says method B
    beats method A.  ``prob`` is the one-sided normal probability.
    """
    loss_a = np.asarray(loss_a, dtype=np.float64).ravel()
    loss_b = np.asarray(loss_b, dtype=np.float64).ravel()
    if loss_a.size != loss_b.size:
        raise ValueError(f"loss series differ in length: {loss_a.size} vs {loss_b.size}")
    n = loss_a.size
    if n < 3:
        raise ValueError(f"need at least 3 paired losses, got {n}")
    if h < 1 or h > n - 1:
        raise ValueError(f"horizon must lie in 1..{n - 1}, got {h}")
    if not (np.isfinite(loss_a).all() and np.isfinite(loss_b).all()):
        raise ValueError("loss series must be finite")

    d = loss_a - loss_b
    d_bar = d.mean()
    centered = d - d_bar
    variance = float(centered @ centered) / n
    for k in range(1, h):
        variance += 2.0 * float(centered[k:] @ centered[:-k]) / n
    if variance <= 0:
        raise ValueError("degenerate differential: zero variance")
    statistic = float(d_bar / math.sqrt(variance / n))
    return DMResult(statistic=statistic, prob=normal_cdf(statistic))


def per_sample_mse(obs, pred) -> np.ndarray:
    """Per-sample grid MSE, the default loss series for dm_test."""
    obs = np.asarray(obs, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if obs.shape != pred.shape or obs.ndim != 3:
        raise ValueError(f"expected matching (n, H, W) stacks, "
                         f"got {obs.shape} and {pred.shape}")
    return ((pred - obs) ** 2).mean(axis=(1, 2))
