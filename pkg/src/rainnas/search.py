"""Self-supervised architecture search over the candidate-op supernet.

The loop alternates two phases over epochs t = 0..T-1:

* t % u > 0, weight phase: sample two op paths, push two crops through
  the online network on path one and two more crops through the target
  network on path two, descend the online weights on the summed MSE of
  the embedding pairs, then fold the online weights into the target by
  exponential moving average.
* t % u == 0, logit phase: only block i = t // (T // N) is eligible;
  its logits move by a score-function estimate (advantage times
  grad-log-softmax of the sampled ops) while every weight and running
  statistic stays bitwise untouched.

A supervised variant swaps the embedding objective for plain MSE against
the observation grid (full grids, no crops, no target branch).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Adam, Tensor, no_grad
from .autodiff import ops
from .network import (NetworkConfig, SearchNetwork, derive_arch, init_theta,
                      sample_arch, softmax_rows)
from .blocks import OP_KINDS

__all__ = [
    "SearchConfig", "TwinState", "SearchResult",
    "random_crop4", "contrastive_loss", "ema_sync",
    "search_step_weights", "search_step_theta", "run_search",
]


@dataclass
class SearchConfig:
    epochs: int = 24
    num_blocks: int = 4
    u: int = 3
    momentum: float = 0.99
    batch_size: int = 8
    learning_rate: float = 1e-5
    theta_learning_rate: float = 0.1
    crop: int = 24
    feature_width: int = 32
    projector_pool: int = 4
    supervised: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < self.num_blocks:
            raise ValueError(f"epochs ({self.epochs}) must be >= num_blocks ({self.num_blocks})")
        if self.u < 2:
            raise ValueError(f"u must be >= 2, got {self.u}")
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"momentum must lie in (0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.crop < 1:
            raise ValueError("batch_size and crop must be positive")


@dataclass
class TwinState:
    online: SearchNetwork
    target: SearchNetwork
    theta: np.ndarray
    optimizer: Adam
    baseline: float | None = None   # running mean of the logit-phase loss


@dataclass
class SearchResult:
    architecture: tuple[str, ...]
    theta: np.ndarray
    log: list[dict] = field(default_factory=list)
    network: SearchNetwork | None = None


def random_crop4(x: np.ndarray, crop: int, rng: np.random.Generator):
    """Four independent uniform spatial crops of a (batch, c, H, W) stack."""
    if x.ndim != 4:
        raise ValueError(f"random_crop4 expects a 4-d stack, got shape {x.shape}")
    h, w = x.shape[2], x.shape[3]
    if crop > h or crop > w:
        raise ValueError(f"crop {crop} exceeds grid extent {h}x{w}")
    outs = []
    for _ in range(4):
        rows = rng.integers(0, h - crop + 1, size=x.shape[0])
        cols = rng.integers(0, w - crop + 1, size=x.shape[0])
        out = np.empty((x.shape[0], x.shape[1], crop, crop), dtype=x.dtype)
        for b, (r, c) in enumerate(zip(rows, cols)):
            out[b] = x[b, :, r:r + crop, c:c + crop]
        outs.append(out)
    return tuple(outs)


def contrastive_loss(q1: Tensor, q2: Tensor, k1: Tensor, k2: Tensor) -> Tensor:
    """MSE(q1, k1) + MSE(q2, k2), with the k-side detached."""
    return ops.add(ops.mse_loss(q1, k1.detach()), ops.mse_loss(q2, k2.detach()))


def ema_sync(target_params: list[Tensor], online_params: list[Tensor], m: float) -> None:
    """target := m * target + (1 - m) * online, elementwise in place."""
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"momentum must lie in [0, 1], got {m}")
    if len(target_params) != len(online_params):
        raise ValueError(f"parameter lists differ in length: "
                         f"{len(target_params)} vs {len(online_params)}")
    for t, o in zip(target_params, online_params):
        if t.data.shape != o.data.shape:
            raise ValueError(f"parameter shape mismatch: {t.data.shape} vs {o.data.shape}")
        t.data *= m
        t.data += (1.0 - m) * o.data


def _twin_loss(state: TwinState, xb: np.ndarray, yb: np.ndarray | None,
               a1, a2, cfg: SearchConfig, rng: np.random.Generator,
               update_running: bool) -> Tensor:
    if cfg.supervised:
        x = Tensor(xb)
        target = Tensor(yb.reshape(yb.shape[0], -1))
        p1 = state.online.forward(x, a1, training=True, update_running=update_running)
        p2 = state.online.forward(x, a2, training=True, update_running=update_running)
        return ops.add(ops.mse_loss(p1, target), ops.mse_loss(p2, target))
    x1, x2, x1p, x2p = random_crop4(xb, cfg.crop, rng)
    q1 = state.online.forward(Tensor(x1), a1, training=True, update_running=update_running)
    q2 = state.online.forward(Tensor(x2), a1, training=True, update_running=update_running)
    with no_grad():
        k1 = state.target.forward(Tensor(x1p), a2, training=True, update_running=False)
        k2 = state.target.forward(Tensor(x2p), a2, training=True, update_running=False)
    return contrastive_loss(q1, q2, k1, k2)


def search_step_weights(batch, state: TwinState, cfg: SearchConfig,
                        rng: np.random.Generator) -> float:
    """One descent step on the online weights plus an EMA sync."""
    xb, yb = batch
    a1 = sample_arch(state.theta, rng)
    a2 = sample_arch(state.theta, rng)
    loss = _twin_loss(state, xb, yb, a1, a2, cfg, rng, update_running=True)
    state.optimizer.zero_grad()
    loss.backward()
    state.optimizer.step()
    ema_sync(state.target.parameters(), state.online.parameters(), cfg.momentum)
    return loss.item()


def scheduled_block(t: int, epochs: int, num_blocks: int) -> int:
    """0-based block index eligible at epoch t (clamped when T % N != 0)."""
    span = epochs // num_blocks
    if span == 0:
        raise ValueError(f"epochs ({epochs}) must be >= num_blocks ({num_blocks})")
    return min(t // span, num_blocks - 1)


def search_step_theta(batch, state: TwinState, cfg: SearchConfig, t: int,
                      rng: np.random.Generator) -> float:
    """One score-function update on the scheduled block's logits.

    Weights, optimizer state, and batchnorm running buffers are read-only
    here; the non-scheduled logit rows are untouched.
    """
    xb, yb = batch
    i = scheduled_block(t, cfg.epochs, cfg.num_blocks)
    base = list(derive_arch(state.theta))
    probs = softmax_rows(state.theta[i])
    o1 = int(rng.choice(len(OP_KINDS), p=probs))
    o2 = int(rng.choice(len(OP_KINDS), p=probs))
    a1, a2 = list(base), list(base)
    a1[i] = OP_KINDS[o1]
    a2[i] = OP_KINDS[o2]
    with no_grad():
        loss = _twin_loss(state, xb, yb, tuple(a1), tuple(a2), cfg, rng,
                          update_running=False).item()
    if state.baseline is None:
        state.baseline = loss
    advantage = loss - state.baseline
    score = -2.0 * probs
    score[o1] += 1.0
    score[o2] += 1.0
    state.theta[i] -= cfg.theta_learning_rate * advantage * score
    state.baseline = 0.9 * state.baseline + 0.1 * loss
    return loss


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def run_search(x: np.ndarray, cfg: SearchConfig, y: np.ndarray | None = None,
               state: TwinState | None = None) -> SearchResult:
    """Full alternating search; returns the argmax path and the trail.

    ``x`` is the (n, c, H, W) ensemble stack; ``y`` (n, H, W) is needed
    only by the supervised variant.  A prebuilt ``state`` may be passed
    to search over custom (e.g. partially frozen) networks.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[0] == 0:
        raise ValueError(f"search needs a nonempty (n, c, H, W) stack, got shape {x.shape}")
    if cfg.supervised and y is None:
        raise ValueError("supervised search needs observation grids")
    if y is not None:
        y = np.asarray(y, dtype=np.float64)
    if cfg.crop > min(x.shape[2], x.shape[3]):
        raise ValueError(f"crop {cfg.crop} exceeds grid extent {x.shape[2]}x{x.shape[3]}")

    rng = np.random.default_rng(cfg.seed)
    if state is None:
        net_cfg = NetworkConfig(in_channels=x.shape[1], feature_width=cfg.feature_width,
                                num_blocks=cfg.num_blocks, projector_pool=cfg.projector_pool,
                                grid_h=x.shape[2], grid_w=x.shape[3])
        online = SearchNetwork(net_cfg, rng=rng)
        target = SearchNetwork(net_cfg, rng=rng)
        target.load_state_dict(online.state_dict())
        theta = init_theta(cfg.num_blocks, rng=rng)
        state = TwinState(online=online, target=target, theta=theta,
                          optimizer=Adam(online.parameters(), cfg.learning_rate))
    elif state.theta.shape != (cfg.num_blocks, len(OP_KINDS)):
        raise ValueError(f"state theta shape {state.theta.shape} does not match "
                         f"{cfg.num_blocks} blocks")

    log: list[dict] = []
    for t in range(cfg.epochs):
        losses = []
        if t % cfg.u > 0:
            for idx in _epoch_batches(x.shape[0], cfg.batch_size, rng):
                batch = (x[idx], None if y is None else y[idx])
                losses.append(search_step_weights(batch, state, cfg, rng))
            log.append({"epoch": t, "phase": "W", "block": None,
                        "loss": float(np.mean(losses))})
        else:
            for idx in _epoch_batches(x.shape[0], cfg.batch_size, rng):
                batch = (x[idx], None if y is None else y[idx])
                losses.append(search_step_theta(batch, state, cfg, t, rng))
            block = scheduled_block(t, cfg.epochs, cfg.num_blocks) + 1
            log.append({"epoch": t, "phase": "theta", "block": block,
                        "loss": float(np.mean(losses))})
        if not np.isfinite(losses).all():
            warnings.warn(f"non-finite search loss at epoch {t}")
    return SearchResult(architecture=derive_arch(state.theta),
                        theta=state.theta, log=log, network=state.online)


def write_search_log(path, log: list[dict]) -> None:
    lines = ["epoch,phase,block,loss"]
    for row in log:
        block = "" if row["block"] is None else str(row["block"])
        lines.append(f"{row['epoch']},{row['phase']},{block},{row['loss']:.10g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
