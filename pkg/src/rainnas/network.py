"""Searchable network: stem -> N choice blocks -> projector.

The stem halves the grid (33x33 -> 16x16) and widens to F channels; each
of the N blocks holds one instance of every candidate operator so any
operator path can be evaluated with shared stem/projector weights; the
projector pools to a small grid and maps linearly back to the 1089-pixel
rainfall plane.

Architecture logits live outside the gradient tape as a plain (N, 3)
array: rows are softmax-sampled during search and argmaxed to derive the
final path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Conv2d, BatchNorm2d, Linear, Tensor
from .autodiff import ops
from .blocks import OP_KINDS, make_block

__all__ = [
    "NetworkConfig", "SearchNetwork",
    "init_theta", "softmax_rows", "sample_arch", "derive_arch",
    "save_architecture", "load_architecture",
]


@dataclass
class NetworkConfig:
    in_channels: int
    feature_width: int = 32
    num_blocks: int = 4
    grid_h: int = 33
    grid_w: int = 33
    projector_pool: int = 4

    def __post_init__(self):
        if self.in_channels < 1 or self.num_blocks < 1:
            raise ValueError(f"need in_channels >= 1 and num_blocks >= 1, "
                             f"got {self.in_channels}, {self.num_blocks}")
        if self.grid_h < 4 or self.grid_w < 4:
            raise ValueError(f"grid {self.grid_h}x{self.grid_w} too small for the stem pool")

    @property
    def out_dim(self) -> int:
        return self.grid_h * self.grid_w


class SearchNetwork:
    """Holds all candidate-op weights; ``forward`` follows one op path."""

    def __init__(self, config: NetworkConfig, *, rng: np.random.Generator):
        self.config = config
        f = config.feature_width
        self.stem_conv = Conv2d(config.in_channels, f, 3, padding=1, rng=rng)
        self.stem_bn = BatchNorm2d(f)
        self.blocks: list[dict[str, object]] = [
            {kind: make_block(kind, f, rng=rng) for kind in OP_KINDS}
            for _ in range(config.num_blocks)
        ]
        pooled = f * config.projector_pool * config.projector_pool
        self.fc = Linear(pooled, config.out_dim, rng=rng)

    # ------------------------------------------------------------------
    # forward pieces
    # ------------------------------------------------------------------

    def stem(self, x: Tensor, *, training: bool, update_running: bool = True) -> Tensor:
        if x.data.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ValueError(f"stem expects (batch, {self.config.in_channels}, H, W), "
                             f"got {x.shape}")
        h = self.stem_conv(x)
        h = self.stem_bn(h, training=training, update_running=update_running)
        return ops.maxpool2d(ops.relu(h), 2, 2)

    def project(self, h: Tensor) -> Tensor:
        p = self.config.projector_pool
        pooled = ops.adaptive_avgpool2d(h, p, p)
        flat = ops.reshape(pooled, (pooled.shape[0], -1))
        return self.fc(flat)

    def forward(self, x: Tensor, arch, *, training: bool, update_running: bool = True) -> Tensor:
        arch = tuple(arch)
        if len(arch) != self.config.num_blocks:
            raise ValueError(f"architecture has {len(arch)} entries, "
                             f"network has {self.config.num_blocks} blocks")
        h = self.stem(x, training=training, update_running=update_running)
        for block_ops, kind in zip(self.blocks, arch):
            if kind not in block_ops:
                raise ValueError(f"unknown block kind {kind!r}, expected one of {OP_KINDS}")
            h = block_ops[kind].forward(h, training=training, update_running=update_running)
        return self.project(h)

    # ------------------------------------------------------------------
    # parameter plumbing
    # ------------------------------------------------------------------

    def parameters(self) -> list[Tensor]:
        params = self.stem_conv.parameters() + self.stem_bn.parameters()
        for block_ops in self.blocks:
            for kind in OP_KINDS:
                params += block_ops[kind].parameters()
        return params + self.fc.parameters()

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(self.stem_conv.state_dict("stem.conv."))
        out.update(self.stem_bn.state_dict("stem.bn."))
        for i, block_ops in enumerate(self.blocks):
            for kind in OP_KINDS:
                out.update(block_ops[kind].state_dict(f"blocks.{i}.{kind}."))
        out.update(self.fc.state_dict("fc."))
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.stem_conv.load_state_dict(state, "stem.conv.")
        self.stem_bn.load_state_dict(state, "stem.bn.")
        for i, block_ops in enumerate(self.blocks):
            for kind in OP_KINDS:
                block_ops[kind].load_state_dict(state, f"blocks.{i}.{kind}.")
        self.fc.load_state_dict(state, "fc.")


# ----------------------------------------------------------------------
# architecture logits
# ----------------------------------------------------------------------

def init_theta(num_blocks: int, *, rng: np.random.Generator,
               scale: float = 1e-3) -> np.ndarray:
    """Near-uniform logits; the tiny jitter only breaks exact ties."""
    return rng.normal(0.0, scale, size=(num_blocks, len(OP_KINDS)))


def softmax_rows(theta: np.ndarray) -> np.ndarray:
    z = theta - theta.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sample_arch(theta: np.ndarray, rng: np.random.Generator) -> tuple[str, ...]:
    if not np.isfinite(theta).all():
        raise ValueError("architecture logits must be finite")
    probs = softmax_rows(np.asarray(theta, dtype=np.float64))
    return tuple(OP_KINDS[rng.choice(len(OP_KINDS), p=row)] for row in probs)


def derive_arch(theta: np.ndarray) -> tuple[str, ...]:
    """Per-block argmax; ties resolve to the lowest op index."""
    theta = np.asarray(theta, dtype=np.float64)
    if not np.isfinite(theta).all():
        raise ValueError("architecture logits must be finite")
    return tuple(OP_KINDS[i] for i in theta.argmax(axis=-1))


def save_architecture(path, arch) -> None:
    arch = list(arch)
    for kind in arch:
        if kind not in OP_KINDS:
            raise ValueError(f"unknown block kind {kind!r}, expected one of {OP_KINDS}")
    Path(path).write_text(json.dumps({"blocks": arch}, indent=2) + "\n")


def load_architecture(path) -> tuple[str, ...]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not a valid architecture file: {exc}") from exc
    if not isinstance(doc, dict) or "blocks" not in doc:
        raise ValueError(f"{path}: architecture file must contain a 'blocks' list")
    blocks = doc["blocks"]
    if (not isinstance(blocks, list) or not blocks
            or any(k not in OP_KINDS for k in blocks)):
        raise ValueError(f"{path}: 'blocks' must be a nonempty list drawn from {OP_KINDS}")
    return tuple(blocks)
