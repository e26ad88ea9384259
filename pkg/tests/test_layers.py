"""Stateful layer wrappers: init scales, forward equivalence, checkpoints."""

import numpy as np
import pytest

from rainnas.autodiff import BatchNorm2d, Conv2d, Linear, Tensor
from rainnas.autodiff import ops


def test_conv_init_within_kaiming_bound_and_seeded():
    rng = np.random.default_rng(0)
    layer = Conv2d(3, 8, 3, rng=rng)
    fan_in = 3 * 3 * 3
    assert np.abs(layer.weight.data).max() <= np.sqrt(6.0 / fan_in)
    assert np.abs(layer.bias.data).max() <= 1.0 / np.sqrt(fan_in)
    again = Conv2d(3, 8, 3, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(layer.weight.data, again.weight.data)


def test_conv_call_equals_functional():
    rng = np.random.default_rng(1)
    layer = Conv2d(2, 4, 3, stride=1, padding=1, rng=rng)
    x = Tensor(rng.normal(size=(2, 2, 5, 5)))
    np.testing.assert_array_equal(
        layer(x).data,
        ops.conv2d(x, layer.weight, layer.bias, stride=1, padding=1).data)


def test_linear_init_bound():
    layer = Linear(64, 10, rng=np.random.default_rng(2))
    assert np.abs(layer.weight.data).max() <= np.sqrt(6.0 / 64)
    assert layer.weight.shape == (64, 10)


def test_batchnorm_initial_identity_stats():
    layer = BatchNorm2d(5)
    np.testing.assert_array_equal(layer.gamma.data, np.ones(5))
    np.testing.assert_array_equal(layer.beta.data, np.zeros(5))
    np.testing.assert_array_equal(layer.state.running_mean, np.zeros(5))
    np.testing.assert_array_equal(layer.state.running_var, np.ones(5))


def test_state_dict_prefixes_and_roundtrip():
    rng = np.random.default_rng(3)
    layer = Conv2d(2, 3, 3, rng=rng)
    state = layer.state_dict("stem.conv.")
    assert set(state) == {"stem.conv.weight", "stem.conv.bias"}

    other = Conv2d(2, 3, 3, rng=np.random.default_rng(99))
    other.load_state_dict(state, "stem.conv.")
    np.testing.assert_array_equal(other.weight.data, layer.weight.data)
    np.testing.assert_array_equal(other.bias.data, layer.bias.data)


def test_batchnorm_state_dict_carries_running_buffers():
    layer = BatchNorm2d(2)
    layer.state.running_mean[:] = [1.0, 2.0]
    layer.state.running_var[:] = [3.0, 4.0]
    fresh = BatchNorm2d(2)
    fresh.load_state_dict(layer.state_dict("bn."), "bn.")
    np.testing.assert_array_equal(fresh.state.running_mean, [1.0, 2.0])
    np.testing.assert_array_equal(fresh.state.running_var, [3.0, 4.0])


def test_load_shape_mismatch_raises():
    layer = Linear(4, 2, rng=np.random.default_rng(4))
    bad = {"weight": np.zeros((3, 2)), "bias": np.zeros(2)}
    with pytest.raises(ValueError, match="shape"):
        layer.load_state_dict(bad)


def test_load_missing_key_raises():
    layer = Linear(4, 2, rng=np.random.default_rng(5))
    with pytest.raises(KeyError):
        layer.load_state_dict({"weight": np.zeros((4, 2))})


def test_parameters_require_grad():
    rng = np.random.default_rng(6)
    for layer in (Conv2d(1, 1, 3, rng=rng), BatchNorm2d(2), Linear(2, 2, rng=rng)):
        assert all(p.requires_grad for p in layer.parameters())
