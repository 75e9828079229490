"""Finite-forest fluctuations around the large-M reference.

``clt_experiment`` looks at the scaled difference at fixed points and
``sup_convergence_experiment`` at the sup over a grid as ``M`` grows.
"""

from __future__ import annotations

import itertools
import math
import time

import numpy as np
from scipy import stats

from .. import rng
from ..errors import ConfigError
from ..forest import compensated_mean, infinite_reference, sigma_tilde_sq, tree_prediction_matrix
from ..model import RegressionModel, sample_dataset
from ..trees import BuilderConfig
from .report import ExperimentReport, joint_se

__all__ = ["clt_experiment", "sup_convergence_experiment", "grid_points"]


def grid_points(d: int, resolution: int) -> np.ndarray:
    """Cell-centred grid with ``resolution`` points per axis."""
    if resolution < 1 or resolution**d > 100_000:
        raise ConfigError("grid must have between 1 and 1e5 points")
    axis = (np.arange(resolution) + 0.5) / resolution
    return np.array(list(itertools.product(axis, repeat=d)), dtype=np.float64)


def clt_experiment(
    model: RegressionModel,
    cfg: BuilderConfig,
    n: int,
    x_points,
    M: int,
    replicates: int,
    M_ref: int,
    seed: int,
    M_var: int = 100_000,
    ks_threshold: float = 0.06,
    var_tolerance: float = 0.2,
    threads: int | None = None,
    tag: str = "clt",
) -> ExperimentReport:
    """Normality of ``sqrt(M) (m_M(x) - m_inf(x)) / sigma_tilde(x)`` at fixed points.

    One dataset is drawn; ``replicates`` independent ``M``-tree forests are
    compared with an ``M_ref``-tree reference.  ``sigma_tilde^2`` comes from
    an independent ``M_var``-tree sample.  Verdicts: the KS distance is
    below ``ks_threshold`` at 90% of the points and the replicate variance
    is within ``var_tolerance`` of ``sigma_tilde^2`` at 80% of them.
    """
    t0 = time.perf_counter()
    if replicates < 200:
        raise ConfigError("replicates must be at least 200")
    if M_ref < 100 * M:
        raise ConfigError(f"M_ref={M_ref} must be at least 100 x M={100 * M}")
    X = np.atleast_2d(np.asarray(x_points, dtype=np.float64))
    data = sample_dataset(model, n, rng.derive_seed(seed, "clt/data"))
    ref = infinite_reference(data, cfg, M_ref, X, rng.derive_seed(seed, "clt/ref"), compared_M=[M], threads=threads)
    sig = sigma_tilde_sq(data, cfg, X, M_var, rng.derive_seed(seed, "clt/var"), threads)
    s2 = np.asarray(sig.value)
    diffs = np.empty((replicates, X.shape[0]))
    seeds = rng.derive_seeds(seed, "clt/forests", replicates * M)
    for r in range(replicates):
        P = tree_prediction_matrix(data, cfg, seeds[r * M:(r + 1) * M], X, threads)
        diffs[r] = math.sqrt(M) * (compensated_mean(P) - ref.mean)

    report = ExperimentReport(
        tag,
        {
            "model": model.to_dict(),
            "builder": cfg.to_dict(),
            "n": n,
            "x_points": X,
            "M": M,
            "replicates": replicates,
            "M_ref": M_ref,
            "M_var": M_var,
            "seed": seed,
            "ks_threshold": ks_threshold,
            "var_tolerance": var_tolerance,
        },
    )
    ks_ok = var_ok = used = 0
    for j, x in enumerate(X):
        row = {f"x{m + 1}": float(v) for m, v in enumerate(x)}
        row.update({"sigma_tilde_sq": float(s2[j]), "sigma_tilde_sq_se": float(np.asarray(sig.standard_error)[j])})
        if s2[j] <= 0.0:
            row.update({"degenerate": True, "ks": math.nan, "ks_pvalue": math.nan, "replicate_var": 0.0, "var_ratio": math.nan})
            report.notes.append(f"point {j} skipped: zero tree variance")
            report.rows.append(row)
            continue
        used += 1
        z = diffs[:, j] / math.sqrt(s2[j])
        ks = stats.kstest(z, "norm")
        rv = float(np.var(diffs[:, j], ddof=1))
        ratio = rv / s2[j]
        ks_ok += ks.statistic < ks_threshold
        var_ok += abs(ratio - 1.0) <= var_tolerance
        row.update(
            {
                "degenerate": False,
                "ks": float(ks.statistic),
                "ks_pvalue": float(ks.pvalue),
                "mean_scaled_diff": float(z.mean()),
                "replicate_var": rv,
                "var_ratio": ratio,
                "reference_se": float(ref.standard_error[j]),
            }
        )
        report.rows.append(row)
    if used:
        report.add("ks", ks_ok >= math.ceil(0.9 * used), f"{ks_ok}/{used} points with KS < {ks_threshold}")
        report.add("variance", var_ok >= math.ceil(0.8 * used), f"{var_ok}/{used} points within {var_tolerance:.0%}")
    else:
        report.notes.append("all points degenerate")
    report.wall_clock = time.perf_counter() - t0
    return report


def sup_convergence_experiment(
    model: RegressionModel,
    cfg: BuilderConfig,
    n: int,
    grid_resolution: int,
    M_list: list[int],
    M_ref: int,
    seed: int,
    replicates: int = 5,
    shared: bool = False,
    slope_range: tuple[float, float] = (-0.7, -0.3),
    threads: int | None = None,
    tag: str = "sup_conv",
) -> ExperimentReport:
    """Sup over a grid of ``|m_M - m_ref|`` for growing ``M``.

    With ``shared=True`` forest ``M`` is made of the first ``M`` reference
    trees (so ``M = M_ref`` gives exactly 0); otherwise each of the
    ``replicates`` forests uses fresh trees.
    """
    t0 = time.perf_counter()
    M_list = sorted(int(m) for m in M_list)
    if not M_list or M_list[0] < 1 or M_list[-1] > M_ref:
        raise ConfigError("M_list must hold integers in [1, M_ref]")
    if shared and replicates != 1:
        raise ConfigError("shared reference trees allow a single replicate")
    G = grid_points(model.d, grid_resolution)
    data = sample_dataset(model, n, rng.derive_seed(seed, "sup/data"))
    ref_master = rng.derive_seed(seed, "sup/ref")
    ref = infinite_reference(data, cfg, M_ref, G, ref_master, threads=threads)
    report = ExperimentReport(
        tag,
        {
            "model": model.to_dict(),
            "builder": cfg.to_dict(),
            "n": n,
            "grid_resolution": grid_resolution,
            "grid_points": G.shape[0],
            "M_list": M_list,
            "M_ref": M_ref,
            "replicates": replicates,
            "shared": shared,
            "seed": seed,
        },
    )
    if M_ref < 100 * M_list[-1]:
        report.notes.append(
            f"M_ref/max(M) = {M_ref / M_list[-1]:g} < 100; reference error inflates the last sup by "
            f"a factor about sqrt(1 + max(M)/M_ref) = {math.sqrt(1 + M_list[-1] / M_ref):.4f}"
        )
    means, ses = [], []
    ref_seeds = rng.derive_seeds(ref_master, "reference", M_list[-1]) if shared else None
    for M in M_list:
        sups = np.empty(replicates)
        for r in range(replicates):
            seeds = ref_seeds[:M] if shared else rng.derive_seeds(seed, f"sup/M={M}", M, start=r * M)
            sups[r] = np.max(np.abs(compensated_mean(tree_prediction_matrix(data, cfg, seeds, G, threads)) - ref.mean))
        mean = float(sups.mean())
        se = float(sups.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else 0.0
        means.append(mean)
        ses.append(se)
        report.rows.append({"M": M, "sup": mean, "sup_se": se, "replicates": replicates, "scaled_sup": mean * math.sqrt(M)})
    mono = all(means[i + 1] <= means[i] + 2.0 * joint_se(ses[i], ses[i + 1]) for i in range(len(M_list) - 1))
    report.add("non_increasing", mono, "sup(M_next) <= sup(M) + 2 joint SE")
    if len(M_list) >= 2 and min(means) > 0:
        slope = float(np.polyfit(np.log(M_list), np.log(means), 1)[0])
        lo, hi = slope_range
        report.add("slope", lo <= slope <= hi, f"log-log slope {slope:.4f} in [{lo}, {hi}]")
        report.notes.append(f"fitted log-log slope of sup vs M: {slope:.6f}")
    report.wall_clock = time.perf_counter() - t0
    return report
