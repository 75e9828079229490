"""Risk along a growing sample size with tuning parameters scheduled in ``n``."""

from __future__ import annotations

import math
import time

from .. import rng
from ..errors import ConfigError
from ..model import RegressionModel
from ..trees import QuantileConfig, UniformConfig
from .report import ExperimentReport, joint_se
from .risk import estimate_risk

__all__ = ["uniform_level", "subsample_size", "consistency_sweep"]


def uniform_level(n: int) -> int:
    """``floor(log2(n) / 2)``, computed on integers."""
    return (int(n).bit_length() - 1) // 2


def subsample_size(n: int) -> int:
    """``ceil(n^(2/3))``, computed on integers."""
    target = int(n) * int(n)
    a = max(1, round(n ** (2.0 / 3.0)))
    while a**3 < target:
        a += 1
    while a > 1 and (a - 1) ** 3 >= target:
        a -= 1
    return a


def consistency_sweep(
    model: RegressionModel,
    builder: str,
    n_list: list[int],
    M: int,
    datasets: int,
    test_points: int,
    seed: int,
    q: float = 0.8,
    single_tree: bool = True,
    threads: int | None = None,
    tag: str | None = None,
) -> ExperimentReport:
    """Forest risk at each ``n``; pass when the largest ``n`` beats the smallest.

    Uniform forests use level ``floor(log2(n)/2)``; quantile forests use
    ``a_n = ceil(n^(2/3))``.  For quantile forests a single tree is also
    scored at the largest ``n`` to show that one tree does not catch up.
    """
    t0 = time.perf_counter()
    if builder not in ("uniform", "quantile"):
        raise ConfigError("builder must be 'uniform' or 'quantile'")
    n_list = sorted(int(n) for n in n_list)
    if len(n_list) < 2:
        raise ConfigError("n_list needs at least two sizes")
    if datasets < 2:
        raise ConfigError("at least two datasets are needed for standard errors")
    report = ExperimentReport(
        tag or f"consistency_{builder}",
        {
            "model": model.to_dict(),
            "builder": builder,
            "n_list": n_list,
            "M": M,
            "datasets": datasets,
            "test_points": test_points,
            "seed": seed,
            "q": q,
            "schedule": "k = floor(log2(n)/2)" if builder == "uniform" else "a_n = ceil(n^(2/3))",
        },
    )
    if model.x_dist != "mixture":
        report.notes.append("design density is uniform; bounded-density condition holds with c = C = 1")
    estimates = []
    for n in n_list:
        if builder == "uniform":
            cfg, param = UniformConfig(uniform_level(n)), uniform_level(n)
        else:
            cfg, param = QuantileConfig(subsample_size(n), q), subsample_size(n)
        ds_seed = rng.derive_seed(seed, f"consistency/n={n}")
        est = estimate_risk(model, cfg, n, M, datasets, test_points, ds_seed, threads=threads)
        estimates.append(est)
        report.rows.append(
            {
                "n": n,
                "trees": M,
                "parameter": param,
                "risk": est.mean,
                "se": est.se,
                "cluster_se": est.cluster_se,
                "replicates": est.replicates,
            }
        )
    first, last = estimates[0], estimates[-1]
    js = joint_se(first.joint_se, last.joint_se)
    report.add(
        "risk_decreases",
        last.mean < first.mean - 2.0 * js,
        f"R({n_list[-1]})={last.mean:.5f} < R({n_list[0]})={first.mean:.5f} - 2 x {js:.2e}",
    )
    if single_tree and builder == "quantile":
        n = n_list[-1]
        ds_seed = rng.derive_seed(seed, f"consistency/n={n}")
        one = estimate_risk(model, QuantileConfig(subsample_size(n), q), n, 1, datasets, test_points, ds_seed,
                            threads=threads)
        report.rows.append(
            {"n": n, "trees": 1, "parameter": subsample_size(n), "risk": one.mean, "se": one.se,
             "cluster_se": one.cluster_se, "replicates": one.replicates}
        )
        report.notes.append(
            f"single tree at n={n}: risk {one.mean:.5f} vs forest {last.mean:.5f} (difference "
            f"{one.mean - last.mean:.5f})"
        )
    report.wall_clock = time.perf_counter() - t0
    return report
