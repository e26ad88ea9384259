"""Parameterized layers: thin stateful wrappers over the functional ops.

Each layer owns its tensors, hands them to the optimizer via
``parameters()``, and round-trips through checkpoints via
``state_dict()`` / ``load_state_dict()`` with dotted-name prefixes.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor

__all__ = ["Conv2d", "BatchNorm2d", "Linear"]


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _bias_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _assign(tensor: Tensor, array: np.ndarray, name: str) -> None:
    if tensor.data.shape != array.shape:
        raise ValueError(f"checkpoint entry {name!r} has shape {array.shape}, "
                         f"expected {tensor.data.shape}")
    tensor.data[...] = array


class Conv2d:
    def __init__(self, in_channels: int, out_channels: int, kernel: int,
                 stride: int = 1, padding: int = 0, *, rng: np.random.Generator):
        fan_in = in_channels * kernel * kernel
        self.stride = stride
        self.padding = padding
        self.weight = Tensor(_kaiming_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in),
                             requires_grad=True)
        self.bias = Tensor(_bias_uniform(rng, (out_channels,), fan_in), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + "weight": self.weight.data, prefix + "bias": self.bias.data}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        _assign(self.weight, state[prefix + "weight"], prefix + "weight")
        _assign(self.bias, state[prefix + "bias"], prefix + "bias")


class BatchNorm2d:
    def __init__(self, channels: int):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.state = ops.BatchNormState(channels)

    def __call__(self, x: Tensor, *, training: bool, update_running: bool = True) -> Tensor:
        return ops.batchnorm2d(x, self.gamma, self.beta, self.state,
                               training=training, update_running=update_running)

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {
            prefix + "gamma": self.gamma.data,
            prefix + "beta": self.beta.data,
            prefix + "running_mean": self.state.running_mean,
            prefix + "running_var": self.state.running_var,
        }

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        _assign(self.gamma, state[prefix + "gamma"], prefix + "gamma")
        _assign(self.beta, state[prefix + "beta"], prefix + "beta")
        for key in ("running_mean", "running_var"):
            arr = state[prefix + key]
            if arr.shape != getattr(self.state, key).shape:
                raise ValueError(f"checkpoint entry {prefix + key!r} has shape {arr.shape}, "
                                 f"expected {getattr(self.state, key).shape}")
            setattr(self.state, key, arr.astype(np.float64).copy())


class Linear:
    def __init__(self, in_features: int, out_features: int, *, rng: np.random.Generator):
        self.weight = Tensor(_kaiming_uniform(rng, (in_features, out_features), in_features),
                             requires_grad=True)
        self.bias = Tensor(_bias_uniform(rng, (out_features,), in_features), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + "weight": self.weight.data, prefix + "bias": self.bias.data}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        _assign(self.weight, state[prefix + "weight"], prefix + "weight")
        _assign(self.bias, state[prefix + "bias"], prefix + "bias")
