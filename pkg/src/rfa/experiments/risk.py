"""Risk of finite forests against the large-M reference.

Risks are squared errors against the regression function ``m(X)``, not
against ``Y``.  Standard errors come from the spread of per-dataset means
(datasets are independent, test points within a dataset are not).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .. import rng
from ..errors import ConfigError
from ..forest import (
    check_reference_size,
    compensated_mean,
    infinite_reference,
    theta_variance,
    tree_prediction_matrix,
)
from ..model import RegressionModel, evaluate_m, sample_dataset, sample_points
from ..trees import BuilderConfig
from .report import ExperimentReport

__all__ = ["RiskEstimate", "estimate_risk", "risk_gap_experiment", "trees_needed", "risk_bound"]


@dataclass(frozen=True)
class RiskEstimate:
    """Mean squared error with two standard errors.

    ``se`` treats every (dataset, test point) pair as a replicate;
    ``cluster_se`` uses per-dataset means and accounts for correlation
    within a dataset.  ``joint_se`` is the larger of the two.
    """

    mean: float
    se: float
    replicates: int
    cluster_se: float

    @property
    def joint_se(self) -> float:
        return max(self.se, self.cluster_se)


def _cluster_se(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1) / math.sqrt(values.shape[0])) if values.shape[0] > 1 else 0.0


def _test_points(model, test_points, seed, i):
    X = sample_points(model, test_points, rng.generator(seed, "risk/test", i))
    return X, evaluate_m(model, X)


def estimate_risk(
    model: RegressionModel,
    cfg: BuilderConfig,
    n: int,
    M: int | str,
    datasets: int,
    test_points: int,
    seed: int,
    M_ref: int | None = None,
    threads: int | None = None,
) -> RiskEstimate:
    """Monte Carlo risk over fresh datasets, test points and trees.

    ``M="inf"`` estimates the infinite-forest risk from an ``M_ref``-tree
    reference, removing the reference's own variance ``V / M_ref``.
    """
    if datasets < 1 or test_points < 1:
        raise ConfigError("datasets and test_points must be positive")
    infinite = isinstance(M, str)
    if infinite and (M != "inf" or not M_ref):
        raise ConfigError("M must be a positive integer or 'inf' with M_ref")
    if not infinite and M < 1:
        raise ConfigError("M must be positive")
    units = np.empty((datasets, test_points))
    for i in range(datasets):
        data = sample_dataset(model, n, rng.derive_seed(seed, "risk/data", i))
        X, mX = _test_points(model, test_points, seed, i)
        if infinite:
            ref = infinite_reference(data, cfg, int(M_ref), X, rng.derive_seed(seed, "risk/ref", i), threads=threads)
            units[i] = (ref.mean - mX) ** 2 - ref.tree_variance / M_ref
        else:
            seeds = rng.derive_seeds(seed, f"risk/M={M}/ds={i}", int(M))
            units[i] = (compensated_mean(tree_prediction_matrix(data, cfg, seeds, X, threads)) - mX) ** 2
    flat = units.reshape(-1)
    se = float(np.std(flat, ddof=1) / math.sqrt(flat.size)) if flat.size > 1 else 0.0
    return RiskEstimate(float(flat.mean()), se, int(flat.size), _cluster_se(units.mean(axis=1)))


def risk_bound(M: int, m_inf_norm: float, sigma: float, n: int) -> float:
    """``(8 / M) (||m||^2 + sigma^2 (1 + 4 log n))``."""
    return 8.0 / M * (m_inf_norm**2 + sigma**2 * (1.0 + 4.0 * math.log(n)))


def trees_needed(epsilon: float, m_inf_norm: float, sigma: float, n: int) -> int:
    """Smallest tree count guaranteeing a risk gap of at most ``epsilon``."""
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if n < 1:
        raise ConfigError("n must be positive")
    raw = 8.0 * (m_inf_norm**2 + sigma**2) / epsilon + 32.0 * sigma**2 * math.log(n) / epsilon
    return max(1, math.ceil(raw))


def risk_gap_experiment(
    model: RegressionModel,
    cfg: BuilderConfig,
    n: int,
    M_list: list[int],
    M_ref: int,
    datasets: int,
    test_points: int,
    seed: int,
    tree_budget: int = 1000,
    M_var: int = 2000,
    threads: int | None = None,
    tag: str = "risk_gap",
) -> ExperimentReport:
    """Finite-forest risk minus infinite-forest risk, against ``E[V]/M``.

    For each dataset: an ``M_ref`` reference gives the infinite-forest
    error, an independent ``M_var``-tree sample gives the tree variance
    ``V(X)``, and ``ceil(tree_budget / M)`` independent ``M``-tree forests
    give the finite-forest error.  The residual
    ``R(M) - R(inf) - E[V]/M`` is formed per dataset, so its standard error
    is the joint one.
    """
    t0 = time.perf_counter()
    M_list = sorted(int(m) for m in M_list)
    if not M_list or M_list[0] < 1:
        raise ConfigError("M_list must hold positive integers")
    check_reference_size(M_ref, M_list)
    if datasets < 2:
        raise ConfigError("at least two datasets are needed for standard errors")
    reps = {M: max(1, math.ceil(tree_budget / M)) for M in M_list}
    A = {M: np.empty(datasets) for M in M_list}
    C = {M: np.empty(datasets) for M in M_list}
    B = np.empty(datasets)
    for i in range(datasets):
        data = sample_dataset(model, n, rng.derive_seed(seed, "risk/data", i))
        X, mX = _test_points(model, test_points, seed, i)
        ref = infinite_reference(
            data, cfg, M_ref, X, rng.derive_seed(seed, "risk/ref", i), compared_M=M_list, threads=threads
        )
        B[i] = np.mean((ref.mean - mX) ** 2 - ref.tree_variance / M_ref)
        V = np.asarray(theta_variance(data, cfg, X, M_var, rng.derive_seed(seed, "risk/var", i), threads).value)
        for M in M_list:
            seeds = rng.derive_seeds(seed, f"risk/M={M}/ds={i}", M * reps[M])
            P = tree_prediction_matrix(data, cfg, seeds, X, threads)
            err = np.zeros(test_points)
            for r in range(reps[M]):
                err += (compensated_mean(P[r * M:(r + 1) * M]) - mX) ** 2
            A[M][i] = np.mean(err / reps[M])
            C[M][i] = np.mean(V) / M

    report = ExperimentReport(
        tag,
        {
            "model": model.to_dict(),
            "builder": cfg.to_dict(),
            "n": n,
            "M_list": M_list,
            "M_ref": M_ref,
            "datasets": datasets,
            "test_points": test_points,
            "seed": seed,
            "tree_budget": tree_budget,
            "M_var": M_var,
        },
    )
    r_inf, r_inf_se = float(B.mean()), _cluster_se(B)
    gaps, gap_ses = [], []
    for M in M_list:
        gap = A[M] - B
        resid = gap - C[M]
        bound = risk_bound(M, model.sup_norm, model.sigma, n)
        row = {
            "M": M,
            "forests_per_dataset": reps[M],
            "risk_M": float(A[M].mean()),
            "risk_M_se": _cluster_se(A[M]),
            "risk_inf": r_inf,
            "risk_inf_se": r_inf_se,
            "gap": float(gap.mean()),
            "gap_se": _cluster_se(gap),
            "variance_term": float(C[M].mean()),
            "variance_term_se": _cluster_se(C[M]),
            "residual": float(resid.mean()),
            "residual_se": _cluster_se(resid),
            "bound": bound,
        }
        report.rows.append(row)
        gaps.append(row["gap"])
        gap_ses.append(row["gap_se"])
        report.add(
            f"residual_M{M}",
            abs(row["residual"]) <= 3.0 * row["residual_se"],
            f"|{row['residual']:.3e}| <= 3 x {row['residual_se']:.3e}",
        )
        report.add(f"bound_M{M}", row["gap"] <= bound, f"{row['gap']:.4e} <= {bound:.4e}")
    if len(M_list) >= 2:
        if min(gaps) > 0:
            slope = float(np.polyfit(np.log(M_list), np.log(gaps), 1)[0])
        else:
            slope = math.nan
        report.add("slope", -1.15 <= slope <= -0.85, f"log-log slope {slope:.4f} in [-1.15, -0.85]")
        report.notes.append(f"fitted log-log slope of gap vs M: {slope:.6f}")
    report.notes.append("infinite-forest risk is bias-corrected by the reference's own variance V/M_ref")
    report.wall_clock = time.perf_counter() - t0
    return report
