import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gammainc

from rfa.connection import (
    connection_mc,
    coupling_inequality_check,
    grid_constant,
    grid_step_estimate,
    grid_step_exact,
    grid_step_bound,
    uniform_connection_1d,
    uniform_connection_origin_multid,
)
from rfa.errors import ConfigError, InstanceTooLarge
from rfa.trees import QuantileConfig, UniformConfig


def oracle_1d(k, x):
    # P[Poisson(-log x) >= k]
    return 1.0 if k == 0 else float(gammainc(k, -math.log(x)))


def oracle_multid(k, x):
    # coefficient extraction: sum over splits of k cuts among d coordinates,
    # done as a product of exponential generating polynomials
    d = len(x)
    poly = np.zeros(k + 1)
    poly[0] = 1.0
    for xj in x:
        term = np.array([oracle_1d(m, xj) / math.factorial(m) for m in range(k + 1)])
        poly = np.convolve(poly, term)[: k + 1]
    return poly[k] * math.factorial(k) / d**k


@pytest.mark.parametrize("k", range(0, 12))
@pytest.mark.parametrize("x", [1e-9, 0.01, 0.2, 0.5, 0.77, 0.999999, 1.0])
def test_1d_closed_form_matches_gamma_oracle(k, x):
    assert uniform_connection_1d(k, x) == pytest.approx(oracle_1d(k, x), rel=1e-12, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.lists(st.floats(0.001, 1.0), min_size=2, max_size=3))
def test_multid_closed_form_matches_polynomial_oracle(k, x):
    assert uniform_connection_origin_multid(k, x) == pytest.approx(oracle_multid(k, x), rel=1e-10, abs=1e-14)


def test_multid_reduces_to_1d():
    for k in range(6):
        assert uniform_connection_origin_multid(k, [0.3]) == pytest.approx(uniform_connection_1d(k, 0.3), rel=1e-14)


def test_closed_form_edges():
    assert uniform_connection_1d(0, 0.4) == 1.0
    # any cut separates 0 from 1; nothing separates equal points
    assert uniform_connection_1d(5, 1.0) == 0.0
    assert uniform_connection_origin_multid(3, [1.0, 1.0]) == 0.0
    assert uniform_connection_origin_multid(3, [0.0, 0.0]) == 1.0
    with pytest.raises(InstanceTooLarge):
        uniform_connection_origin_multid(200, np.full(8, 0.5))


def test_connection_decreases_in_k():
    for x in (0.1, 0.5, 0.9):
        vals = [uniform_connection_1d(k, x) for k in range(15)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))
    vals = [uniform_connection_origin_multid(k, [0.4, 0.7]) for k in range(8)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(0, 6), st.integers(0, 10**6))
def test_mc_symmetric_and_bounded(d, k, seed):
    g = np.random.default_rng(seed)
    x, z = g.random(d), g.random(d)
    a = connection_mc(None, UniformConfig(k), x, z, 500, seed)
    b = connection_mc(None, UniformConfig(k), z, x, 500, seed)
    assert a == b and 0.0 <= a.point_estimate <= 1.0
    assert connection_mc(None, UniformConfig(k), x, x, 50, seed).point_estimate == 1.0


def test_path_and_tree_methods_agree_in_distribution():
    x, z = np.array([0.2, 0.4]), np.array([0.35, 0.5])
    a = connection_mc(None, UniformConfig(3), x, z, 40_000, 1, method="path")
    b = connection_mc(None, UniformConfig(3), x, z, 40_000, 1, method="trees")
    assert abs(a.point_estimate - b.point_estimate) <= 4 * math.hypot(a.standard_error, b.standard_error)


def test_mc_near_closed_form():
    est = connection_mc(None, UniformConfig(3), [0.0], [0.3], 100_000, 4)
    assert abs(est.point_estimate - uniform_connection_1d(3, 0.3)) <= 4 * est.standard_error


def test_quantile_connection_is_data_dependent(data2):
    est = connection_mc(data2, QuantileConfig(30), [0.5, 0.5], [0.52, 0.5], 500, 1)
    assert 0.0 < est.point_estimate <= 1.0
    with pytest.raises(ConfigError):
        connection_mc(data2, QuantileConfig(30), [0.5, 0.5], [0.5, 0.5], 10, 1, method="path")
    with pytest.raises(ConfigError):
        connection_mc(None, UniformConfig(2), [0.1], [0.1, 0.2], 10, 1)


def test_coupling_check_holds():
    rep = coupling_inequality_check(UniformConfig(4), [0.1, 0.6], [0.3, 0.65], 20_000, 2)
    assert rep.passed
    assert rep.closed_form == pytest.approx(uniform_connection_origin_multid(4, [0.2, 0.05]))


def test_grid_constant_value():
    assert grid_constant(1, 1) == pytest.approx((48 * math.e) ** (1 / 3))
    stated, proved = grid_step_bound(2, 1, 0.5)
    assert stated < proved


def test_grid_step_exact_and_bound():
    delta = grid_step_exact(2, 1, 0.5)
    eta = delta
    assert 1.0 - uniform_connection_1d(2, eta) == pytest.approx(0.5**2 / 8, rel=1e-10)
    assert delta == pytest.approx(0.004954, rel=1e-3)
    stated, proved = grid_step_bound(2, 1, 0.5)
    # only the stated reading is a valid lower bound here
    assert stated <= delta < proved


def test_grid_step_estimate_dyadic():
    g = grid_step_estimate(None, UniformConfig(2), 0.5, 10, 20_000, 3, d=1)
    assert g.delta_hat == 2.0**-8
    assert g.exact == pytest.approx(grid_step_exact(2, 1, 0.5))
    assert g.delta_hat >= g.exact / 2


def test_oracle_se_does_not_collapse():
    from rfa.connection import oracle_se

    assert oracle_se(0.5, 100) == 0.05
    assert oracle_se(1e-8, 10**5) > 0.0
    assert oracle_se(1.0, 10) == 0.0 and oracle_se(0.0, 10) == 0.0
