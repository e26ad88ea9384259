"""Supervised training of a derived architecture.

The objective is Loss = MSE + c_H / clamp(soft_HSS, eps, 1): the second
term rewards categorical skill, and because hard level-binning has zero
gradient almost everywhere, the contingency counts are softened with
sigmoid level memberships (temperature tau).  c_H = 0 short-circuits to
plain MSE.  Hard metrics stay the reporting currency; the soft score
only shapes gradients.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .autodiff import Adam, Tensor, no_grad
from .autodiff import ops
from .metrics import LEVEL_THRESHOLDS, NUM_LEVELS, classify, forecast_report
from .network import NetworkConfig, SearchNetwork

__all__ = [
    "TrainConfig", "soft_level_probs", "soft_hss", "composite_loss",
    "train_network", "retrain", "predict_network",
    "HISTORY_COLUMNS", "write_history",
]

HISTORY_COLUMNS = ("epoch", "train_loss", "val_bias", "val_mae", "val_rmse",
                   "val_nse", "val_acc", "val_hss")


@dataclass
class TrainConfig:
    learning_rate: float = 2.5e-4
    batch_size: int = 64
    epochs: int = 300
    c_h: float = 10.0
    epsilon: float = 1e-10
    tau: float = 0.5
    feature_width: int = 32
    projector_pool: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning_rate, batch_size, and epochs must be positive")
        if self.c_h < 0:
            raise ValueError(f"c_h must be >= 0, got {self.c_h}")
        if self.epsilon <= 0 or self.tau <= 0:
            raise ValueError("epsilon and tau must be positive")


def _level_sigmoids(y_pred: Tensor, tau: float) -> list[Tensor]:
    return [ops.sigmoid(ops.mul_elem(ops.add(y_pred, -t), 1.0 / tau))
            for t in LEVEL_THRESHOLDS]


def _level_prob_terms(y_pred: Tensor, tau: float) -> list[Tensor]:
    s = _level_sigmoids(y_pred, tau)
    probs = [ops.sub(1.0, s[0])]
    probs += [ops.sub(s[k], s[k + 1]) for k in range(len(s) - 1)]
    probs.append(s[-1])
    return probs


def soft_level_probs(y_pred: Tensor, tau: float = 0.5) -> Tensor:
    """Sigmoid-softened level memberships, shape (..., 5), rows sum to 1."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return ops.stack_last(_level_prob_terms(y_pred, tau))


def _tsum(terms):
    return reduce(ops.add, terms)


def soft_hss(y_pred: Tensor, y_obs: np.ndarray, tau: float = 0.5,
             epsilon: float = 1e-10) -> Tensor:
    """Differentiable chance-corrected skill against hard-binned observations.

    Expected contingency counts pair the observed level indicator with the
    soft predicted memberships; the usual skill quotient then runs on those
    counts.  A degenerate denominator returns the constant ``epsilon`` and
    raises a warning instead of dividing by zero.
    """
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    y_obs = np.asarray(y_obs, dtype=np.float64)
    if y_obs.size != y_pred.size:
        raise ValueError(f"prediction and observation sizes differ: "
                         f"{y_pred.size} vs {y_obs.size}")
    obs_levels = classify(y_obs).reshape(y_pred.shape)
    probs = _level_prob_terms(y_pred, tau)
    masks = [(obs_levels == lv + 1).astype(np.float64) for lv in range(NUM_LEVELS)]
    counts = [[ops.sum_all(ops.mul_elem(probs[j], masks[i]))
               for j in range(NUM_LEVELS)] for i in range(NUM_LEVELS)]
    total = float(y_obs.size)
    diag = _tsum([counts[i][i] for i in range(NUM_LEVELS)])
    rows = [_tsum(counts[i]) for i in range(NUM_LEVELS)]
    cols = [_tsum([counts[i][j] for i in range(NUM_LEVELS)]) for j in range(NUM_LEVELS)]
    chance = ops.mul_elem(
        _tsum([ops.mul_elem(rows[i], cols[i]) for i in range(NUM_LEVELS)]),
        1.0 / (total * total))
    denom = ops.sub(1.0, chance)
    if abs(denom.item()) < 1e-12:
        warnings.warn("soft HSS denominator degenerate; returning the epsilon floor")
        return Tensor(np.asarray(epsilon))
    return ops.div(ops.sub(ops.mul_elem(diag, 1.0 / total), chance), denom)


def composite_loss(y_pred: Tensor, y_obs: np.ndarray, c_h: float,
                   epsilon: float = 1e-10, tau: float = 0.5) -> Tensor:
    """MSE plus c_H over the clamped soft skill; exactly MSE when c_H = 0."""
    if c_h < 0:
        raise ValueError(f"c_h must be >= 0, got {c_h}")
    y_obs = np.asarray(y_obs, dtype=np.float64).reshape(y_pred.shape)
    loss = ops.mse_loss(y_pred, Tensor(y_obs))
    if c_h == 0:
        return loss
    skill = ops.clamp(soft_hss(y_pred, y_obs, tau=tau, epsilon=epsilon), epsilon, 1.0)
    return ops.add(loss, ops.div(float(c_h), skill))


def predict_network(network: SearchNetwork, arch, x: np.ndarray,
                    batch_size: int = 64) -> np.ndarray:
    """Eval-mode forward over batches; output clipped to physical rainfall."""
    x = np.asarray(x, dtype=np.float64)
    h, w = network.config.grid_h, network.config.grid_w
    out = np.empty((x.shape[0], h, w))
    with no_grad():
        for start in range(0, x.shape[0], batch_size):
            xb = Tensor(x[start:start + batch_size])
            pred = network.forward(xb, arch, training=False)
            out[start:start + xb.shape[0]] = pred.data.reshape(-1, h, w)
    return np.maximum(out, 0.0)


def _val_row(network: SearchNetwork, arch, x_val, y_val) -> dict[str, float]:
    pred = predict_network(network, arch, x_val)
    try:
        report = forecast_report(y_val, pred)
    except ValueError:
        # degenerate validation split (constant or all-zero observations)
        return {"val_" + name: float("nan")
                for name in ("bias", "mae", "rmse", "nse", "acc", "hss")}
    return {"val_" + name: value for name, value in report.items()}


def train_network(arch, x_train: np.ndarray, y_train: np.ndarray, cfg: TrainConfig,
                  x_val: np.ndarray | None = None, y_val: np.ndarray | None = None,
                  init_state: dict[str, np.ndarray] | None = None):
    """Minibatch descent on the composite loss over full grids.

    Returns the trained network and one history row per epoch (validation
    scores included when a validation split is given).
    """
    arch = tuple(arch)
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if x_train.ndim != 4 or x_train.shape[0] == 0:
        raise ValueError(f"training needs a nonempty (n, c, H, W) stack, "
                         f"got shape {x_train.shape}")
    if y_train.shape != (x_train.shape[0], x_train.shape[2], x_train.shape[3]):
        raise ValueError(f"observation stack {y_train.shape} does not match "
                         f"ensemble stack {x_train.shape}")

    rng = np.random.default_rng(cfg.seed)
    net_cfg = NetworkConfig(in_channels=x_train.shape[1], feature_width=cfg.feature_width,
                            num_blocks=len(arch), projector_pool=cfg.projector_pool,
                            grid_h=x_train.shape[2], grid_w=x_train.shape[3])
    network = SearchNetwork(net_cfg, rng=rng)
    if init_state is not None:
        network.load_state_dict(init_state)
    optimizer = Adam(network.parameters(), cfg.learning_rate)

    n = x_train.shape[0]
    flat_targets = y_train.reshape(n, -1)
    history: list[dict] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            pred = network.forward(Tensor(x_train[idx]), arch, training=True)
            loss = composite_loss(pred, flat_targets[idx], cfg.c_h,
                                  epsilon=cfg.epsilon, tau=cfg.tau)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        row = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if x_val is not None and len(x_val):
            row.update(_val_row(network, arch, x_val, y_val))
        history.append(row)
    return network, history


def retrain(arch, dataset, cfg: TrainConfig,
            init_state: dict[str, np.ndarray] | None = None):
    """Timeline-split a dataset 9:1, train on the head, score the tail."""
    from .data import dataset_arrays, split_timeline

    train_ds, val_ds = split_timeline(dataset)
    x_train, y_train = dataset_arrays(train_ds)
    x_val, y_val = dataset_arrays(val_ds)
    if len(val_ds.samples) == 0:
        x_val = y_val = None
    return train_network(arch, x_train, y_train, cfg,
                         x_val=x_val, y_val=y_val, init_state=init_state)


def write_history(path, history: list[dict]) -> None:
    lines = [",".join(HISTORY_COLUMNS)]
    for row in history:
        cells = [str(row["epoch"]), f"{row['train_loss']:.10g}"]
        for col in HISTORY_COLUMNS[2:]:
            cells.append("" if col not in row else f"{row[col]:.10g}")
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
