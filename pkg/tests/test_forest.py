import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfa.errors import ConfigError
from rfa.forest import (
    check_reference_size,
    compensated_mean,
    forest_predict,
    forest_weights,
    forest_weights_exact,
    grow_forest,
    infinite_reference,
    sigma_tilde_sq,
    theta_variance,
    tree_prediction_matrix,
)
from rfa.model import TrainingSet
from rfa.trees import BreimanConfig, QuantileConfig, UniformConfig, tree_predict

CONFIGS = [UniformConfig(4), QuantileConfig(40), BreimanConfig(5, mtry=1, resample="bootstrap")]


@pytest.mark.parametrize("cfg", CONFIGS)
def test_predictions_identical_across_threads(cfg, data2, queries2):
    f1 = grow_forest(data2, cfg, 70, 3, threads=1)
    f4 = grow_forest(data2, cfg, 70, 3, threads=4)
    a = forest_predict(f1, queries2, threads=1)
    b = forest_predict(f4, queries2, threads=4)
    assert a.tobytes() == b.tobytes()
    seeds = f1.seeds
    P1 = tree_prediction_matrix(data2, cfg, seeds, queries2, threads=1)
    P3 = tree_prediction_matrix(data2, cfg, seeds, queries2, threads=3)
    assert P1.tobytes() == P3.tobytes()
    assert compensated_mean(P1).tobytes() == a.tobytes()


@pytest.mark.parametrize("cfg", CONFIGS)
def test_prediction_matrix_matches_tree_objects(cfg, data2, queries2):
    forest = grow_forest(data2, cfg, 12, 5)
    P = tree_prediction_matrix(data2, cfg, forest.seeds, queries2)
    for m, tree in enumerate(forest.trees):
        np.testing.assert_array_equal(P[m], tree_predict(tree, data2, queries2))


def test_prefix_forests_share_trees(data2, queries2):
    big = grow_forest(data2, QuantileConfig(30), 40, 1)
    small = grow_forest(data2, QuantileConfig(30), 10, 1)
    np.testing.assert_array_equal(big.seeds[:10], small.seeds)


@pytest.mark.parametrize("cfg", CONFIGS[:2])
def test_forest_is_linear_in_responses(cfg, data2, queries2):
    other = TrainingSet(data2.points, np.cos(7 * data2.points[:, 0]), 0, "o")
    combo = TrainingSet(data2.points, 2.0 * data2.responses - 0.5 * other.responses, 0, "c")
    p = lambda d: forest_predict(grow_forest(d, cfg, 30, 9), queries2)
    np.testing.assert_allclose(p(combo), 2.0 * p(data2) - 0.5 * p(other), atol=1e-12)


@pytest.mark.parametrize("cfg", CONFIGS)
def test_weights_reproduce_prediction(cfg, data2, queries2):
    forest = grow_forest(data2, cfg, 25, 2)
    W = forest_weights(forest, queries2)
    np.testing.assert_allclose(W @ data2.responses, forest_predict(forest, queries2), atol=1e-12)
    exact = forest_weights_exact(forest, queries2[0])
    for i, f in exact.items():
        assert W[0, i] == float(f)
    assert sum(exact.values(), Fraction(0)) <= 1


def test_quantile_weights_sum_exactly_one(data2, queries2):
    forest = grow_forest(data2, QuantileConfig(60), 50, 4)
    for x in queries2:
        assert sum(forest_weights_exact(forest, x).values(), Fraction(0)) == 1


def test_constant_response_reproduced(data2, queries2):
    const = TrainingSet(data2.points, np.full(data2.n, 2.5), 0, "c")
    forest = grow_forest(const, QuantileConfig(50), 20, 0)
    np.testing.assert_allclose(forest_predict(forest, queries2), 2.5, rtol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60))
def test_compensated_mean_accuracy(values):
    P = np.array(values)[:, None]
    exact = math.fsum(values) / len(values)
    assert compensated_mean(P)[0] == pytest.approx(exact, rel=1e-12, abs=1e-9)


def test_compensated_mean_beats_naive():
    P = np.array([1e16, 1.0, -1e16, 1.0])[:, None]
    assert compensated_mean(P)[0] == 0.5


def test_theta_variance_matches_numpy(data2, queries2):
    est = theta_variance(data2, UniformConfig(3), queries2[:3], 500, 1)
    from rfa import rng

    P = tree_prediction_matrix(data2, UniformConfig(3), rng.derive_seeds(1, "theta-variance", 500), queries2[:3])
    np.testing.assert_allclose(est.value, P.var(axis=0, ddof=1), rtol=1e-10)
    assert np.all(est.standard_error > 0)
    s = sigma_tilde_sq(data2, UniformConfig(3), queries2[0], 300, 1)
    assert s.passed and s.bound == 4.0 * np.max(data2.responses**2)


def test_infinite_reference_blocks_agree(data2, queries2):
    a = infinite_reference(data2, UniformConfig(3), 1000, queries2, 5, block=128)
    b = infinite_reference(data2, UniformConfig(3), 1000, queries2, 5, block=4096)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_allclose(a.tree_variance, b.tree_variance, rtol=1e-12)
    from rfa import rng

    P = tree_prediction_matrix(data2, UniformConfig(3), rng.derive_seeds(5, "reference", 1000), queries2)
    assert a.mean.tobytes() == compensated_mean(P).tobytes()
    np.testing.assert_allclose(a.tree_variance, P.var(axis=0, ddof=1), rtol=1e-9)


def test_reference_size_rule():
    check_reference_size(10_000, [1, 10, 100])
    with pytest.raises(ConfigError):
        check_reference_size(500, [1, 10, 100])


def test_forest_validation(data1):
    with pytest.raises(ConfigError):
        grow_forest(data1, UniformConfig(2), 0, 1)
    with pytest.raises(ConfigError):
        grow_forest(data1, BreimanConfig(mtry=2), 3, 1)
    with pytest.raises(ConfigError):
        tree_prediction_matrix(data1, UniformConfig(2), [1, 2], np.zeros((2, 3)))
