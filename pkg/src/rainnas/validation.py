"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

__all__ = ["check_ensemble_stack", "check_observation_stack"]


def check_ensemble_stack(x, *, name: str = "X") -> np.ndarray:
    """Coerce to a finite float64 (n, c, H, W) stack."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ValueError(f"{name} must be a 4-d (n_samples, members, H, W) array, "
                         f"got shape {x.shape}")
    if x.shape[0] == 0:
        raise ValueError(f"{name} has no samples")
    if not np.isfinite(x).all():
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_observation_stack(y, x: np.ndarray, *, name: str = "y") -> np.ndarray:
    """Coerce to a finite float64 (n, H, W) stack matching ``x``."""
    y = np.asarray(y, dtype=np.float64)
    expected = (x.shape[0], x.shape[2], x.shape[3])
    if y.shape != expected:
        raise ValueError(f"{name} must have shape {expected} to match X, "
                         f"got {y.shape}")
    if not np.isfinite(y).all():
        raise ValueError(f"{name} contains non-finite values")
    return y
