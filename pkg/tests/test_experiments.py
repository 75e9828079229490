import json
import math

import numpy as np
import pytest

from rfa.errors import ConfigError
from rfa.experiments import (
    ExperimentReport,
    closed_form_agreement,
    clt_experiment,
    consistency_sweep,
    coupling_sweep,
    diameter_sweep,
    estimate_risk,
    grid_points,
    grid_step_report,
    noise_bound_report,
    risk_bound,
    risk_gap_experiment,
    side_length_sweep,
    stone_diagnostics,
    subsample_size,
    sup_convergence_experiment,
    trees_needed,
    uniform_level,
)
from rfa.model import RegressionModel
from rfa.trees import QuantileConfig, UniformConfig


def test_report_files(tmp_path):
    rep = ExperimentReport("demo", {"a": 1})
    rep.rows += [{"x": 0.1, "y": True}, {"x": 2, "z": None}]
    rep.add("ok", True, "fine")
    csv_path, json_path = rep.write(tmp_path)
    assert csv_path.read_text().splitlines() == ["x,y,z", "0.10000000000000001,true,", "2,,"]
    meta = json.loads(json_path.read_text())
    assert meta["passed"] and meta["verdicts"][0]["name"] == "ok"
    rep.add("bad", False)
    assert not rep.passed


@pytest.mark.parametrize("n,expected", [(1, 1), (8, 4), (9, 5), (200, 35), (1000, 100), (2000, 159), (27, 9)])
def test_subsample_size(n, expected):
    assert subsample_size(n) == expected
    assert subsample_size(n) ** 3 >= n * n > (subsample_size(n) - 1) ** 3


def test_uniform_level():
    assert [uniform_level(n) for n in (1, 3, 4, 200, 2000, 2048)] == [0, 0, 1, 3, 5, 5]


def test_trees_needed_meets_bound():
    for eps in (0.5, 0.05, 0.001):
        M = trees_needed(eps, 1.0, 0.5, 200)
        assert risk_bound(M, 1.0, 0.5, 200) <= eps * (1 + 1e-12)
        assert risk_bound(M - 1, 1.0, 0.5, 200) > eps or M == 1
    with pytest.raises(ConfigError):
        trees_needed(0.0, 1.0, 1.0, 10)


def test_risk_of_noiseless_constant_is_zero():
    model = RegressionModel(2, "constant", {"value": 1.5}, 0.0)
    est = estimate_risk(model, QuantileConfig(10), 30, 5, 3, 10, 1)
    assert est.mean == pytest.approx(0.0, abs=1e-25)


def test_infinite_risk_below_single_tree():
    model = RegressionModel(1, "sines", {}, 0.5)
    one = estimate_risk(model, UniformConfig(3), 100, 1, 5, 40, 2)
    inf = estimate_risk(model, UniformConfig(3), 100, "inf", 5, 40, 2, M_ref=2000)
    assert inf.mean < one.mean
    with pytest.raises(ConfigError):
        estimate_risk(model, UniformConfig(3), 100, "inf", 5, 40, 2)


def test_risk_gap_small_run_writes_rows():
    model = RegressionModel(2, "sines", {}, 0.5)
    rep = risk_gap_experiment(model, QuantileConfig(20), 60, [1, 10], 2000, 4, 20, 3, tree_budget=20, M_var=200)
    assert [r["M"] for r in rep.rows][:2] == [1, 10]
    names = [v.name for v in rep.verdicts]
    assert "bound_M1" in names and "bound_M10" in names
    with pytest.raises(ConfigError):
        risk_gap_experiment(model, QuantileConfig(20), 60, [1, 10, 100], 500, 2, 5, 3)


def test_clt_small_run_structure():
    model = RegressionModel(1, "sines", {}, 0.5)
    rep = clt_experiment(model, UniformConfig(3), 100, grid_points(1, 2), 5, 200, 500, 1, M_var=500)
    assert len(rep.rows) == 2 and {"ks", "var_ratio"} <= set(rep.rows[0])
    with pytest.raises(ConfigError):
        clt_experiment(model, UniformConfig(3), 100, grid_points(1, 2), 5, 100, 500, 1)


def test_sup_convergence_shared_reaches_zero():
    model = RegressionModel(1, "sines", {}, 0.5)
    rep = sup_convergence_experiment(model, UniformConfig(3), 80, 16, [10, 100, 1000], 1000, 2, replicates=1, shared=True)
    assert rep.rows[-1]["sup"] == 0.0
    assert rep.verdict("non_increasing").passed


def test_grid_points_shape():
    G = grid_points(2, 16)
    assert G.shape == (256, 2) and G.min() > 0 and G.max() < 1


def test_consistency_validation():
    model = RegressionModel(2, "sines", {}, 0.5)
    with pytest.raises(ConfigError):
        consistency_sweep(model, "breiman", [100, 200], 5, 2, 5, 1)
    with pytest.raises(ConfigError):
        consistency_sweep(model, "uniform", [100], 5, 2, 5, 1)


def test_stone_small():
    model = RegressionModel(2, "sines", {}, 0.5, "mixture")
    rep = stone_diagnostics(model, QuantileConfig(20), 200, 300, 10, 4)
    assert rep.verdict("weights_sum_to_one").passed
    assert all(r["weight_sum_exact_one"] for r in rep.rows)
    assert all(abs(r["weight_sum_float"] - 1.0) < 1e-12 for r in rep.rows)


def test_diameter_sweep_small():
    rep = diameter_sweep(RegressionModel(2), [100, 2000], 100, 20, 5)
    assert rep.passed


def test_side_length_and_noise_small():
    assert side_length_sweep([1, 2], [1, 3], 20_000, 1).passed
    assert noise_bound_report([1, 10, 100], 1.0, 2000, 1).passed


def test_connection_reports_small():
    rep = closed_form_agreement([1], [2], 20_000, 1, x_grid=[0.25, 0.5], min_fraction=0.5)
    assert len(rep.rows) == 2 and set(rep.rows[0]) >= {"k", "d", "x", "z", "closed_form", "mc", "se"}
    assert coupling_sweep(5, 5000, 2).passed
    gs = grid_step_report(None, UniformConfig(2), [0.25, 0.5], 9, 5000, 3, d=1)
    assert gs.verdict("monotone").passed
    with pytest.raises(ConfigError):
        grid_step_report(None, UniformConfig(2), [], 9, 5000, 3, d=1)
