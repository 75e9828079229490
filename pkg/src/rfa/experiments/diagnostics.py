"""Weight and cell diagnostics for local-averaging consistency.

Quantile forests: weights sum to one, no training point is connected to
a query too often, cells shrink as ``n`` grows, and weight mass far from
the query vanishes.  Uniform forests: the side length of the cell
holding a random query.  Gaussian noise: the expected maximum square.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np

from .. import rng
from ..errors import ConfigError
from ..forest import grow_forest, leaf_counts
from ..model import RegressionModel, max_noise_square_bound, sample_dataset, sample_points
from ..trees import QuantileConfig, cell_bounds
from .report import ExperimentReport

__all__ = [
    "stone_diagnostics",
    "diameter_sweep",
    "uniform_side_length_check",
    "side_length_sweep",
    "noise_bound_report",
]

DEFAULT_GAMMAS = (0.1, 0.25, 0.5, 0.75)
DEFAULT_DISTANCES = (0.05, 0.1, 0.2, 0.3, 0.5)


def _queries(model: RegressionModel, x_points, seed: int, tag: str) -> np.ndarray:
    if np.ndim(x_points) == 0:
        return sample_points(model, int(x_points), rng.generator(seed, tag))
    X = np.atleast_2d(np.asarray(x_points, dtype=np.float64))
    if X.shape[1] != model.d:
        raise ConfigError("query dimension does not match the model")
    return X


def _diameters(forest, X: np.ndarray, trees: int) -> np.ndarray:
    out = np.empty((trees, X.shape[0]))
    for m, tree in enumerate(forest.trees[:trees]):
        lo, hi = cell_bounds(tree, X)
        out[m] = np.max(hi - lo, axis=1)
    return out


def stone_diagnostics(
    model: RegressionModel,
    cfg: QuantileConfig,
    n: int,
    M: int,
    x_points,
    seed: int,
    gammas=DEFAULT_GAMMAS,
    distances=DEFAULT_DISTANCES,
    diameter_trees: int | None = None,
    threads: int | None = None,
    tag: str = "stone",
) -> ExperimentReport:
    """Per-query weight and cell statistics of one quantile forest.

    Columns: exact and floating weight sums, the largest fraction of
    trees in which one training point is the query's retained neighbour
    (against ``a_n / n``), ``P[diam > gamma]`` over trees, and the weight
    mass beyond sup-distance ``a``.
    """
    t0 = time.perf_counter()
    if not isinstance(cfg, QuantileConfig):
        raise ConfigError("stone diagnostics need a quantile builder")
    data = sample_dataset(model, n, rng.derive_seed(seed, "stone/data"))
    X = _queries(model, x_points, seed, "stone/queries")
    forest = grow_forest(data, cfg, M, rng.derive_seed(seed, "stone/forest"), threads)
    counts = leaf_counts(forest, X)
    W = np.zeros((X.shape[0], n))
    hits = np.zeros((X.shape[0], n), dtype=np.int64)
    for N, arr in sorted(counts.items()):
        W += arr / float(N * M)
        hits += arr
    n_diam = M if diameter_trees is None else min(M, int(diameter_trees))
    diam = _diameters(forest, X, n_diam)
    bound = cfg.a_n / n
    report = ExperimentReport(
        tag,
        {
            "model": model.to_dict(),
            "builder": cfg.to_dict(),
            "n": n,
            "M": M,
            "queries": X.shape[0],
            "seed": seed,
            "gammas": list(gammas),
            "distances": list(distances),
            "diameter_trees": n_diam,
        },
    )
    exact_ok = conn_ok = 0
    for r, x in enumerate(X):
        exact = sum(
            (Fraction(int(arr[r].sum()), N * M) for N, arr in counts.items()),
            Fraction(0),
        )
        freq = hits[r] / M
        i_max = int(np.argmax(freq))
        p = float(freq[i_max])
        se = math.sqrt(p * (1.0 - p) / M)
        dist = np.max(np.abs(data.points - x), axis=1)
        row = {f"x{m + 1}": float(v) for m, v in enumerate(x)}
        row.update(
            {
                "weight_sum_exact_one": exact == 1,
                "weight_sum_float": math.fsum(W[r]),
                "max_connection": p,
                "max_connection_se": se,
                "connection_bound": bound,
            }
        )
        for g in gammas:
            row[f"p_diam_gt_{g:g}"] = float(np.mean(diam[:, r] > g))
        for a in distances:
            row[f"mass_beyond_{a:g}"] = float(W[r] @ (dist > a))
        report.rows.append(row)
        exact_ok += exact == 1
        conn_ok += p <= bound + 3.0 * se
    report.add("weights_sum_to_one", exact_ok == X.shape[0], f"{exact_ok}/{X.shape[0]} exact rational sums equal 1")
    report.add("max_connection", conn_ok == X.shape[0], f"{conn_ok}/{X.shape[0]} points with max <= a_n/n + 3 SE")
    report.notes.append("connection frequency counts trees where the point is retained in the query's leaf")
    report.wall_clock = time.perf_counter() - t0
    return report


def diameter_sweep(
    model: RegressionModel,
    n_list: list[int],
    M: int,
    x_points,
    seed: int,
    q: float = 0.8,
    a_fraction: float = 0.1,
    gamma: float = 0.5,
    threads: int | None = None,
    tag: str = "diameter",
) -> ExperimentReport:
    """``P[diam > gamma]`` of quantile-forest cells for growing ``n`` with ``a_n = a_fraction * n``."""
    t0 = time.perf_counter()
    n_list = sorted(int(v) for v in n_list)
    X = _queries(model, x_points, seed, "diameter/queries")
    report = ExperimentReport(
        tag,
        {
            "model": model.to_dict(),
            "n_list": n_list,
            "M": M,
            "queries": X.shape[0],
            "seed": seed,
            "q": q,
            "a_fraction": a_fraction,
            "gamma": gamma,
        },
    )
    probs = []
    for n in n_list:
        a_n = max(3, round(a_fraction * n))
        data = sample_dataset(model, n, rng.derive_seed(seed, "diameter/data", n))
        forest = grow_forest(data, QuantileConfig(a_n, q), M, rng.derive_seed(seed, "diameter/forest", n), threads)
        big = _diameters(forest, X, M) > gamma
        per_tree = big.mean(axis=1)
        p = float(big.mean())
        se = float(per_tree.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
        probs.append(p)
        mean_diam = float(np.mean(_diameters(forest, X, min(M, 200))))
        report.rows.append({"n": n, "a_n": a_n, "gamma": gamma, "p_diam_gt": p, "se": se, "mean_diam": mean_diam})
    report.add("decreasing", all(b < a for a, b in zip(probs, probs[1:])), " > ".join(f"{p:.4f}" for p in probs))
    report.add("largest_below_smallest", probs[-1] < probs[0], f"P(n={n_list[-1]})={probs[-1]:.4f} < P(n={n_list[0]})={probs[0]:.4f}")
    report.wall_clock = time.perf_counter() - t0
    return report


def _side_paths(d: int, k: int, M: int, gen: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Side lengths of the cell holding a uniform query, and the product of ``max(U, 1-U)`` per coordinate."""
    side = np.ones((M, d))
    dom = np.ones((M, d))
    if k == 0:
        return side, dom
    U = gen.random((M, d + 2 * k))
    x = U[:, :d].copy()
    a = np.zeros((M, d))
    b = np.ones((M, d))
    rows = np.arange(M)
    for level in range(k):
        j = np.minimum((U[:, d + 2 * level] * d).astype(np.int64), d - 1)
        u = U[:, d + 2 * level + 1]
        aj, bj = a[rows, j], b[rows, j]
        t = aj + u * (bj - aj)
        left = x[rows, j] < t
        b[rows[left], j[left]] = t[left]
        a[rows[~left], j[~left]] = t[~left]
        dom[rows, j] *= np.maximum(u, 1.0 - u)
    side = b - a
    return side, dom


def uniform_side_length_check(d: int, k: int, M: int, seed: int, tag: str | None = None) -> ExperimentReport:
    """Side length of a uniform-tree cell around a uniform random query.

    Two quantities are simulated on the same paths, per coordinate: the
    actual side length, and the product over cuts on that coordinate of
    ``max(U, 1 - U)`` where ``U`` is the relative cut position.  The
    second dominates the first path by path and has mean exactly
    ``(1 - 1/(4d))^k``; the first has mean ``(1 - 1/(3d))^k``.
    """
    t0 = time.perf_counter()
    if d < 1 or k < 0 or M < 2:
        raise ConfigError("need d >= 1, k >= 0, M >= 2")
    side, dom = _side_paths(d, k, M, rng.generator(seed, f"side-length/d={d}/k={k}"))
    analytic = (1.0 - 1.0 / (4.0 * d)) ** k
    exact_side = (1.0 - 1.0 / (3.0 * d)) ** k
    report = ExperimentReport(tag or f"side_length_d{d}_k{k}", {"d": d, "k": k, "M": M, "seed": seed})
    _side_rows(report, d, k, M, side, dom, analytic, exact_side)
    report.wall_clock = time.perf_counter() - t0
    return report


def _side_rows(report, d, k, M, side, dom, analytic, exact_side):
    for j in range(d):
        s_mean, d_mean = float(side[:, j].mean()), float(dom[:, j].mean())
        s_se = float(side[:, j].std(ddof=1) / math.sqrt(M))
        d_se = float(dom[:, j].std(ddof=1) / math.sqrt(M))
        report.rows.append(
            {
                "d": d,
                "k": k,
                "coordinate": j + 1,
                "side_mean": s_mean,
                "side_se": s_se,
                "dominating_mean": d_mean,
                "dominating_se": d_se,
                "analytic_bound": analytic,
                "exact_side_mean": exact_side,
            }
        )
        name = f"d{d}_k{k}_c{j + 1}"
        report.add(f"side_le_bound_{name}", s_mean <= analytic + 3.0 * s_se, f"{s_mean:.5f} <= {analytic:.5f} + 3 x {s_se:.1e}")
        if d == 1 or k == 0:
            tight = abs(d_mean - analytic) <= 3.0 * d_se or (d_se == 0.0 and d_mean == analytic)
            report.add(f"dominating_eq_bound_{name}", tight, f"|{d_mean:.5f} - {analytic:.5f}| <= 3 x {d_se:.1e}")


def side_length_sweep(d_list, k_list, M: int, seed: int, tag: str = "side_length") -> ExperimentReport:
    """:func:`uniform_side_length_check` over a grid of ``(d, k)``, merged into one report."""
    t0 = time.perf_counter()
    report = ExperimentReport(tag, {"d_list": list(d_list), "k_list": list(k_list), "M": M, "seed": seed})
    for d in d_list:
        for k in k_list:
            part = uniform_side_length_check(int(d), int(k), M, seed)
            report.rows.extend(part.rows)
            report.verdicts.extend(part.verdicts)
    report.notes.append(
        "side_mean is the actual side length; dominating_mean is the product of max(U, 1-U) over cuts "
        "on the coordinate, whose mean is the analytic bound"
    )
    report.wall_clock = time.perf_counter() - t0
    return report


def noise_bound_report(n_list, sigma: float, replicates: int, seed: int, tag: str = "noise_max") -> ExperimentReport:
    """``E[max eps_i^2]`` by Monte Carlo against ``sigma^2 (1 + 4 log n)``."""
    t0 = time.perf_counter()
    report = ExperimentReport(tag, {"n_list": list(n_list), "sigma": sigma, "replicates": replicates, "seed": seed})
    for n in n_list:
        res = max_noise_square_bound(int(n), sigma, replicates, rng.derive_seed(seed, "noise-max", int(n)))
        report.rows.append({"n": res.n, "sigma": res.sigma, "estimate": res.estimate, "se": res.standard_error, "bound": res.bound})
        report.add(f"n{res.n}", res.passed, f"{res.estimate:.4f} <= {res.bound:.4f} + 3 x {res.standard_error:.1e}")
    report.wall_clock = time.perf_counter() - t0
    return report
