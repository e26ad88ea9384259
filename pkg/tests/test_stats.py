"""Normal CDF and the loss-differential significance test."""

import math

import numpy as np
import pytest

from rainnas.stats import DMResult, dm_test, normal_cdf, per_sample_mse


def test_normal_cdf_reference_points():
    assert normal_cdf(0.0) == 0.5
    assert abs(normal_cdf(1.62) - 0.9474) < 5e-4
    assert abs(normal_cdf(1.77) - 0.9616) < 5e-4
    assert abs(normal_cdf(1.96) - 0.975) < 1e-3


def test_normal_cdf_antisymmetry_and_monotonicity():
    zs = np.linspace(-4, 4, 33)
    for z in zs:
        assert abs(normal_cdf(z) + normal_cdf(-z) - 1.0) < 1e-15
    vals = [normal_cdf(z) for z in zs]
    assert vals == sorted(vals)
    with pytest.raises(ValueError, match="finite"):
        normal_cdf(float("nan"))
    with pytest.raises(ValueError, match="finite"):
        normal_cdf(float("inf"))


def test_dm_statistic_hand_formula_h1():
    rng = np.random.default_rng(0)
    a = rng.gamma(2.0, 3.0, size=50)
    b = a - 0.8 + rng.normal(0, 0.5, size=50)
    d = a - b
    want = d.mean() / math.sqrt(((d - d.mean()) ** 2).mean() / 50)
    got = dm_test(a, b)
    assert abs(got.statistic - want) < 1e-12
    assert abs(got.prob - normal_cdf(want)) < 1e-15


def test_dm_statistic_hand_formula_h3():
    # smoothed differential: positive lag-1/2 autocovariances keep the
    # long-run variance estimate positive at h=3
    rng = np.random.default_rng(1)
    a = rng.gamma(2.0, 3.0, size=40)
    d = np.convolve(rng.normal(0.5, 0.2, size=42), np.ones(3), "valid")
    b = a - d
    cd = d - d.mean()
    var = (cd @ cd) / 40
    for k in (1, 2):
        var += 2.0 * (cd[k:] @ cd[:-k]) / 40
    want = d.mean() / math.sqrt(var / 40)
    assert abs(dm_test(a, b, h=3).statistic - want) < 1e-12


def test_dm_negative_longrun_variance_is_degenerate():
    # strongly negatively autocorrelated differential: the h=3 estimate
    # turns negative and the test refuses rather than taking a sqrt of it
    rng = np.random.default_rng(1)
    a = rng.gamma(2.0, 3.0, size=40)
    b = np.roll(a, 1) * 0.9
    with pytest.raises(ValueError, match="degenerate"):
        dm_test(a, b, h=3)


def test_dm_antisymmetric_in_argument_order():
    rng = np.random.default_rng(2)
    a = rng.gamma(1.5, 4.0, size=30)
    b = rng.gamma(1.5, 4.0, size=30)
    fwd = dm_test(a, b)
    rev = dm_test(b, a)
    assert fwd.statistic == -rev.statistic
    assert abs(fwd.prob + rev.prob - 1.0) < 1e-15


def test_dm_scale_invariant():
    rng = np.random.default_rng(3)
    a = rng.gamma(1.5, 4.0, size=25)
    b = rng.gamma(1.5, 4.0, size=25)
    base = dm_test(a, b).statistic
    assert dm_test(2.0 * a, 2.0 * b).statistic == base
    assert abs(dm_test(0.137 * a, 0.137 * b).statistic - base) < 1e-12


def test_dm_direction_b_beats_a():
    rng = np.random.default_rng(4)
    a = rng.gamma(2.0, 3.0, size=200)
    b = a - 1.0 + rng.normal(0, 0.1, size=200)
    res = dm_test(a, b)
    assert res.statistic > 3.0
    assert res.prob > 0.99
    assert isinstance(res, DMResult)


def test_dm_validation():
    a = np.ones(10) + np.arange(10) * 0.1
    with pytest.raises(ValueError, match="differ in length"):
        dm_test(a, a[:-1])
    with pytest.raises(ValueError, match="at least 3"):
        dm_test([1.0, 2.0], [0.5, 1.0])
    with pytest.raises(ValueError, match="horizon"):
        dm_test(a, a * 0.5, h=0)
    with pytest.raises(ValueError, match="horizon"):
        dm_test(a, a * 0.5, h=10)
    with pytest.raises(ValueError, match="finite"):
        dm_test(a, a * np.nan)
    with pytest.raises(ValueError, match="zero variance"):
        dm_test(a, a - 2.0)   # constant differential


def test_per_sample_mse_oracle_and_validation():
    rng = np.random.default_rng(5)
    obs = rng.gamma(1.0, 5.0, size=(6, 4, 5))
    pred = obs + rng.normal(0, 2, size=obs.shape)
    got = per_sample_mse(obs, pred)
    for i in range(6):
        assert abs(got[i] - np.mean((pred[i] - obs[i]) ** 2)) < 1e-12
    with pytest.raises(ValueError, match="matching"):
        per_sample_mse(obs, pred[:, :, :4])
    with pytest.raises(ValueError, match="matching"):
        per_sample_mse(obs[0], pred[0])
