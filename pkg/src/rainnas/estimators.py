"""Estimator facade: fit/predict wrappers around search, retraining, and baselines.

All estimators take ensemble stacks shaped (n_samples, members, H, W) and
produce rainfall grids shaped (n_samples, H, W).  ``score`` reports the
pooled Nash-Sutcliffe efficiency (1 is perfect, 0 matches climatology),
the natural skill number for rainfall grids.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .baselines import apply_baseline, fit_wem_weights
from .metrics import nse
from .search import SearchConfig, run_search
from .training import TrainConfig, predict_network, train_network
from .validation import check_ensemble_stack, check_observation_stack

__all__ = [
    "ArchitectureSearch", "RainfallPostProcessor",
    "EnsembleMean", "ProbabilityMatching", "WeightedEnsembleMean",
]


class _NseScorerMixin:
    def score(self, X, y) -> float:
        """Pooled Nash-Sutcliffe efficiency of the predictions."""
        X = check_ensemble_stack(X)
        y = check_observation_stack(y, X)
        return nse(y, self.predict(X))


class ArchitectureSearch(BaseEstimator):
    """Self-supervised block-wise operator search over ensemble stacks.

    ``fit`` needs no labels unless ``supervised`` is on; afterwards
    ``architecture_`` holds the derived op path, ``theta_`` the final
    logits, ``history_`` the per-epoch loss log, and ``network_`` the
    trained online supernet.
    """

    def __init__(self, epochs: int = 24, num_blocks: int = 4, u: int = 3,
                 momentum: float = 0.99, batch_size: int = 8,
                 learning_rate: float = 1e-5, theta_learning_rate: float = 0.1,
                 crop: int = 24, feature_width: int = 32,
                 projector_pool: int = 4, supervised: bool = False,
                 seed: int = 0):
        self.epochs = epochs
        self.num_blocks = num_blocks
        self.u = u
        self.momentum = momentum
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.theta_learning_rate = theta_learning_rate
        self.crop = crop
        self.feature_width = feature_width
        self.projector_pool = projector_pool
        self.supervised = supervised
        self.seed = seed

    def fit(self, X, y=None):
        X = check_ensemble_stack(X)
        if self.supervised:
            if y is None:
                raise ValueError("supervised search needs observation grids")
            y = check_observation_stack(y, X)
        cfg = SearchConfig(epochs=self.epochs, num_blocks=self.num_blocks, u=self.u,
                           momentum=self.momentum, batch_size=self.batch_size,
                           learning_rate=self.learning_rate,
                           theta_learning_rate=self.theta_learning_rate,
                           crop=self.crop, feature_width=self.feature_width,
                           projector_pool=self.projector_pool,
                           supervised=self.supervised, seed=self.seed)
        result = run_search(X, cfg, y if self.supervised else None)
        self.architecture_ = result.architecture
        self.theta_ = result.theta
        self.history_ = result.log
        self.network_ = result.network
        return self


class RainfallPostProcessor(_NseScorerMixin, BaseEstimator, RegressorMixin):
    """Supervised grid regressor over a fixed operator path.

    Trains the derived architecture on full grids with the composite
    MSE + c_H / soft-skill objective; predictions are clipped to
    physical (nonnegative) rainfall.
    """

    def __init__(self, architecture=("CAB", "RB", "SAB", "CAB"),
                 epochs: int = 300, learning_rate: float = 2.5e-4,
                 batch_size: int = 64, c_h: float = 10.0, epsilon: float = 1e-10,
                 tau: float = 0.5, feature_width: int = 32,
                 projector_pool: int = 4, seed: int = 0,
                 init_state: dict | None = None):
        self.architecture = architecture
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.c_h = c_h
        self.epsilon = epsilon
        self.tau = tau
        self.feature_width = feature_width
        self.projector_pool = projector_pool
        self.seed = seed
        self.init_state = init_state

    def fit(self, X, y):
        X = check_ensemble_stack(X)
        y = check_observation_stack(y, X)
        cfg = TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                          epochs=self.epochs, c_h=self.c_h, epsilon=self.epsilon,
                          tau=self.tau, feature_width=self.feature_width,
                          projector_pool=self.projector_pool, seed=self.seed)
        self.architecture_ = tuple(self.architecture)
        self.network_, self.history_ = train_network(
            self.architecture_, X, y, cfg, init_state=self.init_state)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = check_ensemble_stack(X)
        return predict_network(self.network_, self.architecture_, X,
                               batch_size=self.batch_size)


class EnsembleMean(_NseScorerMixin, BaseEstimator, RegressorMixin):
    """Per-pixel mean over ensemble members."""

    def fit(self, X, y=None):
        check_ensemble_stack(X)
        return self

    def predict(self, X) -> np.ndarray:
        return apply_baseline("em", check_ensemble_stack(X))


class ProbabilityMatching(_NseScorerMixin, BaseEstimator, RegressorMixin):
    """Ensemble mean re-valued by the pooled member distribution."""

    def fit(self, X, y=None):
        check_ensemble_stack(X)
        return self

    def predict(self, X) -> np.ndarray:
        return apply_baseline("pm", check_ensemble_stack(X))


class WeightedEnsembleMean(_NseScorerMixin, BaseEstimator, RegressorMixin):
    """Convex member combination weighted by inverse historical MAE."""

    def __init__(self, delta: float = 1e-6):
        self.delta = delta

    def fit(self, X, y):
        X = check_ensemble_stack(X)
        y = check_observation_stack(y, X)
        self.weights_ = fit_wem_weights(X, y, delta=self.delta)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "weights_")
        return apply_baseline("wem", check_ensemble_stack(X), weights=self.weights_)
