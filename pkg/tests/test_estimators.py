"""Estimator facade: parameter plumbing, fit/predict contracts, scoring."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rainnas.baselines import apply_baseline, fit_wem_weights
from rainnas.estimators import (ArchitectureSearch, EnsembleMean,
                                ProbabilityMatching, RainfallPostProcessor,
                                WeightedEnsembleMean)
from rainnas.metrics import nse
from rainnas.training import TrainConfig, predict_network, train_network
from rainnas.validation import check_ensemble_stack, check_observation_stack


def rain_stack(n=8, c=3, h=12, w=12, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.gamma(1.2, 6.0, size=(n, c, h, w))
    y = x.mean(axis=1) * rng.uniform(0.8, 1.2, size=(n, 1, 1))
    return x, y


ALL_ESTIMATORS = [
    ArchitectureSearch(), RainfallPostProcessor(), EnsembleMean(),
    ProbabilityMatching(), WeightedEnsembleMean(),
]


@pytest.mark.parametrize("est", ALL_ESTIMATORS, ids=lambda e: type(e).__name__)
def test_get_params_clone_roundtrip(est):
    params = est.get_params()
    rebuilt = type(est)(**params)
    assert rebuilt.get_params() == params
    assert clone(est).get_params() == params


def test_set_params_feeds_through():
    est = RainfallPostProcessor().set_params(epochs=7, c_h=0.0, projector_pool=2)
    assert est.get_params()["epochs"] == 7
    assert est.get_params()["c_h"] == 0.0
    assert est.get_params()["projector_pool"] == 2


def test_architecture_search_fit_outputs():
    x, _ = rain_stack(n=6)
    est = ArchitectureSearch(epochs=4, num_blocks=2, u=2, batch_size=4,
                             crop=8, feature_width=4, projector_pool=2, seed=0)
    est.fit(x)
    assert len(est.architecture_) == 2
    assert set(est.architecture_) <= {"RB", "SAB", "CAB"}
    assert est.theta_.shape == (2, 3)
    assert len(est.history_) > 0
    assert est.network_ is not None


def test_architecture_search_supervised_needs_labels():
    x, y = rain_stack(n=6)
    est = ArchitectureSearch(epochs=4, num_blocks=2, u=2, batch_size=4,
                             crop=8, feature_width=4, projector_pool=2,
                             supervised=True, seed=0)
    with pytest.raises(ValueError, match="supervised search needs"):
        est.fit(x)
    est.fit(x, y)
    assert len(est.architecture_) == 2


def test_postprocessor_matches_direct_training_bitwise():
    x, y = rain_stack()
    est = RainfallPostProcessor(architecture=("RB", "CAB"), epochs=2,
                                learning_rate=1e-3, batch_size=8, c_h=0.0,
                                feature_width=4, projector_pool=2, seed=3)
    est.fit(x, y)
    pred = est.predict(x)
    cfg = TrainConfig(learning_rate=1e-3, batch_size=8, epochs=2, c_h=0.0,
                      feature_width=4, projector_pool=2, seed=3)
    net, _ = train_network(("RB", "CAB"), x, y, cfg)
    np.testing.assert_array_equal(pred, predict_network(net, ("RB", "CAB"), x))


def test_postprocessor_predictions_shape_and_sign():
    x, y = rain_stack()
    est = RainfallPostProcessor(architecture=("SAB",), epochs=1,
                                batch_size=8, c_h=0.0, feature_width=4,
                                projector_pool=2, seed=0)
    pred = est.fit(x, y).predict(x)
    assert pred.shape == y.shape
    assert (pred >= 0.0).all()


def test_unfitted_predictors_raise():
    x, _ = rain_stack()
    with pytest.raises(NotFittedError):
        RainfallPostProcessor().predict(x)
    with pytest.raises(NotFittedError):
        WeightedEnsembleMean().predict(x)


@pytest.mark.parametrize("est,kind", [
    (EnsembleMean(), "em"), (ProbabilityMatching(), "pm"),
])
def test_stateless_baseline_wrappers_match_functions(est, kind):
    x, y = rain_stack(seed=4)
    pred = est.fit(x, y).predict(x)
    np.testing.assert_array_equal(pred, apply_baseline(kind, x))


def test_weighted_wrapper_matches_fitted_weights():
    x, y = rain_stack(seed=5)
    est = WeightedEnsembleMean().fit(x, y)
    np.testing.assert_array_equal(est.weights_, fit_wem_weights(x, y))
    np.testing.assert_array_equal(
        est.predict(x), apply_baseline("wem", x, weights=est.weights_))


def test_score_is_pooled_nse():
    x, y = rain_stack(seed=6)
    est = EnsembleMean().fit(x, y)
    assert est.score(x, y) == nse(y, est.predict(x))


def test_ensemble_stack_validation():
    good = np.ones((2, 3, 4, 4))
    np.testing.assert_array_equal(check_ensemble_stack(good), good)
    with pytest.raises(ValueError, match="4-d"):
        check_ensemble_stack(np.ones((3, 4, 4)))
    with pytest.raises(ValueError, match="no samples"):
        check_ensemble_stack(np.ones((0, 3, 4, 4)))
    with pytest.raises(ValueError, match="non-finite"):
        bad = good.copy()
        bad[1, 2, 3, 3] = np.nan
        check_ensemble_stack(bad)


def test_observation_stack_validation():
    x = np.ones((2, 3, 4, 4))
    y = np.ones((2, 4, 4))
    np.testing.assert_array_equal(check_observation_stack(y, x), y)
    with pytest.raises(ValueError, match="must have shape"):
        check_observation_stack(np.ones((2, 4, 5)), x)
    with pytest.raises(ValueError, match="non-finite"):
        bad = y.copy()
        bad[0, 0, 0] = np.inf
        check_observation_stack(bad, x)


def test_estimators_accept_lists():
    # sklearn-style coercion: nested lists go through np.asarray
    x, y = rain_stack(n=4)
    pred = EnsembleMean().fit(x.tolist()).predict(x.tolist())
    np.testing.assert_allclose(pred, x.mean(axis=1), atol=1e-12)
