"""Reverse-mode automatic differentiation on dense float64 arrays.

A :class:`Tensor` wraps a numpy array of rank <= 4 and remembers, for every
derived value, which tensors produced it and how to push gradients back to
them.  Calling :meth:`Tensor.backward` on a scalar walks that graph once in
reverse topological order and accumulates ``d(scalar)/d(leaf)`` into the
``grad`` buffer of every leaf that has ``requires_grad`` set.

Everything is float64 and single-threaded: the networks built on top are
small, and numerical fidelity (finite-difference checks) matters more than
speed here.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

MAX_RANK = 4

# When False, operations do not record their inputs and backward() is
# impossible; used for validation passes and score-function loss probes.
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the ``with`` block."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """Dense float64 array participating in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        if self.data.ndim > MAX_RANK:
            raise ValueError(f"rank {self.data.ndim} exceeds supported rank {MAX_RANK}")
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    # -- graph bookkeeping -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def is_leaf(self) -> bool:
        return self._backward_fn is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of {self.data.size} elements")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """Same values, cut off from the graph."""
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every requires_grad leaf.

        ``self`` must be a scalar produced on the recorded graph.  Repeated
        calls keep adding into ``grad`` until the leaves are zeroed.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.shape}")

        order = _topological_order(self)
        # Per-call adjoint buffers so repeated backward() calls add exactly
        # one more copy of the gradient into each leaf.
        adjoint: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            node_grad = adjoint.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward_fn is None:
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = node_grad.copy()
                    else:
                        node.grad += node_grad
                continue
            parent_grads = node._backward_fn(node_grad)
            for parent, pgrad in zip(node._parents, parent_grads):
                if pgrad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoint:
                    adjoint[key] += pgrad
                else:
                    adjoint[key] = pgrad

    # -- operator sugar (implemented in ops.py) -----------------------------

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


def _topological_order(root: Tensor) -> list[Tensor]:
    """Parents-before-children ordering of the subgraph below ``root``."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def make_tensor(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Wrap an op result, recording provenance when grad mode is on.

    ``backward_fn(grad_out)`` must return one gradient array (or None) per
    parent, each shaped like the corresponding parent's data.
    """
    assert np.isfinite(data).all(), "non-finite values out of a forward op"
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def zero_grads(params) -> None:
    """Clear the grad buffer of every tensor in ``params``."""
    for p in params:
        p.grad = None
