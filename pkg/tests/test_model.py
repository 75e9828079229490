import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfa import rng
from rfa.errors import ConfigError
from rfa.model import (
    RegressionModel,
    TrainingSet,
    evaluate_m,
    max_noise_square_bound,
    read_dataset,
    sample_dataset,
    sample_points,
    write_dataset,
)


def test_mean_functions_by_hand():
    x = np.array([0.25, 0.75])
    assert evaluate_m(RegressionModel(2, "sines", {"scale": 2.0}), x) == pytest.approx(-2.0)
    assert evaluate_m(RegressionModel(2, "linear", {"a": [1.0, -2.0], "clip": 0.5}), x) == -0.5
    assert evaluate_m(RegressionModel(2, "linear", {"a": [1.0, 1.0]}), x) == 1.0
    assert evaluate_m(RegressionModel(2, "constant", {"value": 3.0}), x) == 3.0
    step = RegressionModel(2, "step", {"height": 2.0, "threshold": 0.5})
    np.testing.assert_array_equal(evaluate_m(step, np.array([[0.4, 0.9], [0.5, 0.0]])), [0.0, 2.0])


@pytest.mark.parametrize(
    "model",
    [
        RegressionModel(2, "sines", {"scale": 1.5}),
        RegressionModel(3, "linear", {"a": [1.0, -0.5, 0.25]}),
        RegressionModel(1, "step", {"height": -2.0}),
        RegressionModel(2, "constant", {"value": -0.7}),
    ],
)
def test_sup_norm_dominates_samples(model):
    X = np.random.default_rng(1).random((5000, model.d))
    assert np.max(np.abs(evaluate_m(model, X))) <= model.sup_norm + 1e-12


def test_invalid_models_rejected():
    with pytest.raises(ConfigError):
        RegressionModel(0)
    with pytest.raises(ConfigError):
        RegressionModel(2, "cubic")
    with pytest.raises(ConfigError):
        RegressionModel(2, sigma=-1.0)
    with pytest.raises(ConfigError):
        RegressionModel(2, x_dist="mixture", density_ratio=5.0)
    with pytest.raises(ConfigError):
        RegressionModel(2, "linear", {"a": [1.0]})
    with pytest.raises(ConfigError):
        RegressionModel(2, "sines", {"bogus": 1.0})
    with pytest.raises(ConfigError):
        evaluate_m(RegressionModel(2), np.zeros(3))


def test_mixture_density_ratio():
    model = RegressionModel(2, x_dist="mixture", density_ratio=4.0)
    c, C = model.density_bounds
    assert C / c == pytest.approx(4.0)
    # probability mass integrates to one: C * inner_volume + c * outer_volume
    assert C * 0.25 + c * 0.75 == pytest.approx(1.0)
    X = sample_points(model, 200_000, rng.generator(0, "t"))
    inner = np.all(np.abs(X - 0.5) < 0.25, axis=1).mean()
    assert inner == pytest.approx(C * 0.25, abs=0.005)


def test_dataset_deterministic_and_readonly(sines2):
    a = sample_dataset(sines2, 50, 9)
    b = sample_dataset(sines2, 50, 9)
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.responses, b.responses)
    with pytest.raises(ValueError):
        a.points[0, 0] = 0.5
    assert not np.array_equal(sample_dataset(sines2, 50, 10).points, a.points)


def test_noiseless_responses_equal_mean():
    model = RegressionModel(2, "linear", {"a": [1.0, 2.0]}, sigma=0.0)
    data = sample_dataset(model, 30, 1)
    np.testing.assert_array_equal(data.responses, evaluate_m(model, data.points))


def test_noise_moments():
    model = RegressionModel(1, "constant", {"value": 0.0}, sigma=2.0)
    y = sample_dataset(model, 100_000, 4).responses
    assert abs(y.mean()) < 4 * 2.0 / math.sqrt(1e5)
    assert y.std() == pytest.approx(2.0, rel=0.02)


def test_trainingset_validation():
    with pytest.raises(ConfigError):
        TrainingSet(np.array([[1.5]]), np.array([0.0]), 0, "t")
    with pytest.raises(ConfigError):
        TrainingSet(np.zeros((2, 1)), np.zeros(3), 0, "t")
    with pytest.raises(ConfigError):
        TrainingSet(np.zeros((1, 1)), np.array([np.nan]), 0, "t")


def test_dataset_round_trip(tmp_path, sines2):
    data = sample_dataset(sines2, 25, 2)
    write_dataset(data, tmp_path / "d.csv", sines2)
    back = read_dataset(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.points, data.points)
    np.testing.assert_array_equal(back.responses, data.responses)
    assert back.seed == 2


def test_model_dict_round_trip():
    m = RegressionModel(3, "linear", {"a": [1, 2, 3]}, 0.2, "mixture", 2.0)
    assert RegressionModel.from_dict(m.to_dict()) == m


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.sampled_from(["uniform", "mixture"]), st.floats(1.0, 4.0))
def test_points_in_unit_cube(d, dist, ratio):
    X = sample_points(RegressionModel(d, x_dist=dist, density_ratio=ratio), 300, rng.generator(d, dist))
    assert X.shape == (300, d) and X.min() >= 0.0 and X.max() < 1.0


def test_noise_max_bound_small():
    res = max_noise_square_bound(10, 1.0, 2000, 5)
    assert res.passed and res.bound == pytest.approx(1 + 4 * math.log(10))
    assert max_noise_square_bound(1, 1.0, 20000, 5).estimate == pytest.approx(1.0, abs=0.05)
