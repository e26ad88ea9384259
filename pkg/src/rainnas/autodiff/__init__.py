"""Reverse-mode automatic differentiation on numpy float64 arrays."""

from . import ops
from .checkpoint import load_weights, save_weights
from .layers import BatchNorm2d, Conv2d, Linear
from .optim import SGD, Adam
from .tensor import Tensor, grad_enabled, no_grad, zero_grads

__all__ = [
    "Tensor", "no_grad", "grad_enabled", "zero_grads", "ops",
    "Conv2d", "BatchNorm2d", "Linear", "SGD", "Adam",
    "save_weights", "load_weights",
]
