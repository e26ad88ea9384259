"""Statistical post-processing baselines over ensemble stacks.

Three classical reductions of a (c, w, h) member stack to one grid:
plain ensemble mean, probability matching (the mean field's pixel ranks
reassigned the pooled members' ranked values), and an inverse-error
weighted mean fit on a training split.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "BASELINE_KINDS",
    "ensemble_mean", "prob_match", "weighted_em", "fit_wem_weights",
    "apply_baseline",
]

BASELINE_KINDS = ("em", "pm", "wem")


def _member_stack(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] < 1:
        raise ValueError(f"expected a (c, w, h) member stack, got shape {x.shape}")
    return x


def ensemble_mean(x) -> np.ndarray:
    """Per-pixel mean over members."""
    return _member_stack(x).mean(axis=0)


def prob_match(x) -> np.ndarray:
    """Reassign the mean field's ranked pixels the pooled ranked values.

    Pool all c*w*h member values, sort descending, and keep every c-th
    value; the pixel holding the k-th largest ensemble-mean value gets
    the k-th kept value.  Mean-field ties break by row-major pixel index.
    """
    x = _member_stack(x)
    c = x.shape[0]
    em = x.mean(axis=0)
    flat = em.ravel()
    order = np.argsort(-flat, kind="stable")
    pooled = np.sort(x.ravel())[::-1]
    out = np.empty_like(flat)
    out[order] = pooled[::c][:flat.size]
    return out.reshape(em.shape)


def weighted_em(x, weights) -> np.ndarray:
    """Per-pixel convex combination of members."""
    x = _member_stack(x)
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (x.shape[0],):
        raise ValueError(f"need {x.shape[0]} weights, got shape {weights.shape}")
    if (weights < 0).any() or abs(weights.sum() - 1.0) > 1e-8:
        raise ValueError("weights must be nonnegative and sum to 1")
    return np.tensordot(weights, x, axes=1)


def fit_wem_weights(ensembles, observations, delta: float = 1e-6) -> np.ndarray:
    """Global weights proportional to inverse per-member MAE on a split."""
    ensembles = np.asarray(ensembles, dtype=np.float64)
    observations = np.asarray(observations, dtype=np.float64)
    if ensembles.ndim != 4 or ensembles.shape[0] == 0:
        raise ValueError(f"expected a nonempty (n, c, w, h) stack, got shape {ensembles.shape}")
    if observations.shape != (ensembles.shape[0],) + ensembles.shape[2:]:
        raise ValueError(f"observation stack {observations.shape} does not match "
                         f"ensemble stack {ensembles.shape}")
    member_mae = np.abs(ensembles - observations[:, None]).mean(axis=(0, 2, 3))
    raw = 1.0 / (member_mae + delta)
    total = raw.sum()
    if not np.isfinite(total) or total == 0:
        raise ValueError("cannot fit weights: every member has unbounded error")
    return raw / total


def apply_baseline(method: str, ensembles, weights=None) -> np.ndarray:
    """Run one baseline over an (n, c, w, h) stack, sample by sample."""
    ensembles = np.asarray(ensembles, dtype=np.float64)
    if ensembles.ndim != 4:
        raise ValueError(f"expected an (n, c, w, h) stack, got shape {ensembles.shape}")
    if method == "em":
        return ensembles.mean(axis=1)
    if method == "pm":
        return np.stack([prob_match(sample) for sample in ensembles])
    if method == "wem":
        if weights is None:
            raise ValueError("the weighted mean needs fitted weights")
        return np.stack([weighted_em(sample, weights) for sample in ensembles])
    raise ValueError(f"unknown baseline {method!r}, expected one of {BASELINE_KINDS}")
