"""Candidate grid operators for the block-wise architecture search.

Three shape-preserving operators over (batch, F, H, W) feature maps:

* ``ResidualBlock`` (RB): two conv+bn stages with an identity skip,
* ``SpaceAwareBlock`` (SAB): a spatial sigmoid gate from pooled channels,
* ``ChannelAwareBlock`` (CAB): a parameter-free per-pixel energy gate
  that boosts pixels deviating strongly from their plane mean.

All three consume and produce identical shapes, so a network path may
swap one for another freely.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Conv2d, BatchNorm2d, Tensor
from .autodiff import ops

__all__ = [
    "OP_KINDS", "cab_forward",
    "ResidualBlock", "SpaceAwareBlock", "ChannelAwareBlock", "make_block",
]

OP_KINDS = ("RB", "SAB", "CAB")


def cab_forward(z: Tensor, lam: float = 1e-4) -> Tensor:
    """Gate each pixel by its squared deviation from the plane mean.

    With d = z - mean(z) per (sample, channel) plane and n = H*W - 1,
    the gate is sigmoid(d^2 / (4*(sum(d^2)/n + lam)) + 0.5), a value in
    (0, 1) that is largest for the most deviant pixels and exactly
    sigmoid(0.5) on constant planes.
    """
    if lam <= 0:
        raise ValueError(f"cab_forward needs lam > 0, got {lam}")
    if z.data.ndim != 4:
        raise ValueError(f"cab_forward expects NCHW, got shape {z.shape}")
    n = z.shape[2] * z.shape[3] - 1
    if n < 1:
        raise ValueError("cab_forward needs a spatial plane of at least 2 pixels")
    d = ops.sub(z, ops.spatial_mean(z))
    d2 = ops.mul_elem(d, d)
    denom = ops.add(ops.mul_elem(ops.spatial_sum(d2), 4.0 / n), 4.0 * lam)
    gate = ops.sigmoid(ops.add(ops.div(d2, denom), 0.5))
    return ops.mul_elem(z, gate)


class ResidualBlock:
    """relu(z + bn(conv(relu(bn(conv(z)))))) with 3x3 F->F convs."""

    def __init__(self, channels: int, *, rng: np.random.Generator):
        self.conv1 = Conv2d(channels, channels, 3, padding=1, rng=rng)
        self.bn1 = BatchNorm2d(channels)
        self.conv2 = Conv2d(channels, channels, 3, padding=1, rng=rng)
        self.bn2 = BatchNorm2d(channels)

    def forward(self, z: Tensor, *, training: bool, update_running: bool = True) -> Tensor:
        h = ops.relu(self.bn1(self.conv1(z), training=training, update_running=update_running))
        h = self.bn2(self.conv2(h), training=training, update_running=update_running)
        return ops.relu(ops.add(z, h))

    def parameters(self) -> list[Tensor]:
        return (self.conv1.parameters() + self.bn1.parameters()
                + self.conv2.parameters() + self.bn2.parameters())

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        out.update(self.conv1.state_dict(prefix + "conv1."))
        out.update(self.bn1.state_dict(prefix + "bn1."))
        out.update(self.conv2.state_dict(prefix + "conv2."))
        out.update(self.bn2.state_dict(prefix + "bn2."))
        return out

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        self.conv1.load_state_dict(state, prefix + "conv1.")
        self.bn1.load_state_dict(state, prefix + "bn1.")
        self.conv2.load_state_dict(state, prefix + "conv2.")
        self.bn2.load_state_dict(state, prefix + "bn2.")


class SpaceAwareBlock:
    """z times a per-pixel sigmoid gate from a 7x7 conv over pooled channels."""

    def __init__(self, channels: int, *, rng: np.random.Generator):
        del channels  # gate input is the 2-channel (mean, max) pool
        self.conv = Conv2d(2, 1, 7, padding=3, rng=rng)

    def forward(self, z: Tensor, *, training: bool, update_running: bool = True) -> Tensor:
        del training, update_running  # no batch statistics in this block
        pooled = ops.concat_channels(ops.channel_mean(z), ops.channel_max(z))
        gate = ops.sigmoid(self.conv(pooled))
        return ops.mul_elem(z, gate)

    def parameters(self) -> list[Tensor]:
        return self.conv.parameters()

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return self.conv.state_dict(prefix + "conv.")

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        self.conv.load_state_dict(state, prefix + "conv.")


class ChannelAwareBlock:
    """Parameter-free wrapper around :func:`cab_forward`."""

    def __init__(self, channels: int, *, rng: np.random.Generator | None = None,
                 lam: float = 1e-4):
        del channels, rng
        self.lam = lam

    def forward(self, z: Tensor, *, training: bool, update_running: bool = True) -> Tensor:
        del training, update_running
        return cab_forward(z, self.lam)

    def parameters(self) -> list[Tensor]:
        return []

    def state_dict(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = "") -> None:
        pass


_BLOCK_CLASSES = {
    "RB": ResidualBlock,
    "SAB": SpaceAwareBlock,
    "CAB": ChannelAwareBlock,
}


def make_block(kind: str, channels: int, *, rng: np.random.Generator):
    if kind not in _BLOCK_CLASSES:
        raise ValueError(f"unknown block kind {kind!r}, expected one of {OP_KINDS}")
    return _BLOCK_CLASSES[kind](channels, rng=rng)
