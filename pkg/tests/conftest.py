"""Shared test helpers: finite-difference gradient checking.

check_grads probes d(sum(coef * op(inputs)))/d(input) for every input
marked differentiable, comparing reverse-mode gradients against central
finite differences.  Callers are responsible for keeping inputs away
from kinks (relu zeros, pooling ties, clamp edges); helpers below build
such inputs.
"""

from __future__ import annotations

import numpy as np

from rainnas.autodiff import Tensor, no_grad
from rainnas.autodiff import ops


def _coords(shape, limit, rng):
    total = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if shape == ():
        return [()]
    every = list(np.ndindex(*shape))
    if total <= limit:
        return every
    picks = rng.choice(total, size=limit, replace=False)
    return [every[p] for p in picks]


def check_grads(op, arrays, diff=None, eps=1e-6, rtol=1e-4, atol=1e-6,
                max_coords=8, seed=0):
    """Assert reverse-mode grads of ``op(*arrays)`` match central differences.

    ``diff`` selects which positional inputs are differentiated (default
    all).  The probe scalar is sum(coef * op(...)) for a fixed random
    coefficient field, so every output element influences the check.
    """
    rng = np.random.default_rng(seed)
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    diff = list(range(len(arrays))) if diff is None else list(diff)

    tensors = [Tensor(a.copy(), requires_grad=(k in diff))
               for k, a in enumerate(arrays)]
    out = op(*tensors)
    coef = rng.normal(size=out.shape)
    loss = ops.sum_all(ops.mul_elem(out, Tensor(coef)))
    loss.backward()

    def probe(arrs):
        with no_grad():
            val = op(*[Tensor(a) for a in arrs])
        return float((val.data * coef).sum())

    for k in diff:
        grad = tensors[k].grad
        assert grad is not None, f"input {k} received no gradient"
        assert grad.shape == arrays[k].shape
        work = [a.copy() for a in arrays]
        for idx in _coords(arrays[k].shape, max_coords, rng):
            keep = work[k][idx]
            work[k][idx] = keep + eps
            up = probe(work)
            work[k][idx] = keep - eps
            down = probe(work)
            work[k][idx] = keep
            fd = (up - down) / (2.0 * eps)
            got = grad[idx]
            assert abs(got - fd) <= atol + rtol * abs(fd), (
                f"input {k} at {idx}: analytic {got:.8g} vs fd {fd:.8g}")


def away_from_zero(rng, shape, margin=0.05):
    """Values bounded away from 0 (clean relu probing)."""
    x = rng.normal(size=shape)
    return np.sign(x) * (np.abs(x) + margin)


def distinct_values(rng, shape, scale=1.0):
    """A permutation of distinct values (tie-free pooling/argmax probing)."""
    n = int(np.prod(shape, dtype=np.int64))
    return (rng.permutation(n).astype(np.float64).reshape(shape) * scale)
