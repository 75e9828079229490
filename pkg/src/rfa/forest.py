"""Forest aggregation, forest weights and large-M reference estimates.

Every tree gets its own stream seed, derived from the forest's master
seed and its index, so tree ``m`` is the same no matter how many trees
are grown or how the work is split over threads.  Averages over trees
are compensated (Neumaier) sums taken in tree order.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import rng
from ._backend import kernels
from ._parallel import map_chunks
from .errors import ConfigError
from .model import TrainingSet
from .trees import (
    BreimanConfig,
    BuilderConfig,
    QuantileConfig,
    Tree,
    UniformConfig,
    build_tree,
    tree_predict,
)

__all__ = [
    "THETA_TAG",
    "Forest",
    "VarianceEstimate",
    "InfiniteReference",
    "grow_forest",
    "forest_predict",
    "forest_weights",
    "forest_weights_exact",
    "leaf_counts",
    "tree_prediction_matrix",
    "compensated_mean",
    "theta_variance",
    "sigma_tilde_sq",
    "infinite_reference",
    "check_reference_size",
]

THETA_TAG = "forest/theta"
_CHUNK = 256


@dataclass(frozen=True, eq=False)
class Forest:
    data: TrainingSet
    config: BuilderConfig
    master_seed: int
    seeds: np.ndarray
    trees: tuple[Tree, ...]

    @property
    def M(self) -> int:
        return len(self.trees)


def _validate(data: TrainingSet, cfg: BuilderConfig) -> None:
    if isinstance(cfg, QuantileConfig) and cfg.a_n > data.n:
        raise ConfigError(f"a_n={cfg.a_n} exceeds n={data.n}")
    if isinstance(cfg, BreimanConfig):
        if cfg.mtry is not None and cfg.mtry > data.d:
            raise ConfigError(f"mtry={cfg.mtry} exceeds d={data.d}")
        if cfg.resample == "subsample" and cfg.a_n > data.n:
            raise ConfigError(f"a_n={cfg.a_n} exceeds n={data.n}")


def grow_forest(
    data: TrainingSet,
    cfg: BuilderConfig,
    M: int,
    master_seed: int,
    threads: int | None = None,
    tag: str = THETA_TAG,
) -> Forest:
    """Build ``M`` trees on independent derived streams."""
    if M < 1:
        raise ConfigError("M must be at least 1")
    _validate(data, cfg)
    seeds = rng.derive_seeds(master_seed, tag, int(M))

    def build(s: int, e: int) -> list[Tree]:
        return [build_tree(data, cfg, int(seed)) for seed in seeds[s:e]]

    chunks = map_chunks(build, int(M), _CHUNK, threads)
    trees = tuple(t for chunk in chunks for t in chunk)
    return Forest(data, cfg, int(master_seed), seeds, trees)


def tree_prediction_matrix(
    data: TrainingSet,
    cfg: BuilderConfig,
    seeds: Sequence[int] | np.ndarray,
    Q,
    threads: int | None = None,
) -> np.ndarray:
    """Per-tree predictions, shape ``(len(seeds), n_queries)``.

    Trees are rebuilt from their seeds and discarded, which keeps memory
    flat for very large ensembles.
    """
    _validate(data, cfg)
    seeds = np.asarray(seeds, dtype=np.uint64)
    Q = np.ascontiguousarray(np.atleast_2d(np.asarray(Q, dtype=np.float64)))
    if Q.shape[1] != data.d:
        raise ConfigError("query dimension does not match the data")
    X, Y = data.points, data.responses

    def run(s: int, e: int) -> np.ndarray:
        sub = seeds[s:e]
        if isinstance(cfg, UniformConfig):
            return kernels.uniform_predictions(X, Y, cfg.k, sub, Q)
        if isinstance(cfg, QuantileConfig):
            return kernels.quantile_predictions(X, Y, cfg.a_n, cfg.q, cfg.fixed_qn, sub, Q)
        out = np.empty((len(sub), Q.shape[0]))
        for r, sd in enumerate(sub):
            out[r] = tree_predict(build_tree(data, cfg, int(sd)), data, Q)
        return out

    parts = map_chunks(run, seeds.shape[0], _CHUNK, threads)
    return np.vstack(parts) if parts else np.empty((0, Q.shape[0]))


def compensated_mean(P: np.ndarray) -> np.ndarray:
    """Column means of ``P`` with rows added in order by Neumaier summation."""
    P = np.ascontiguousarray(np.atleast_2d(P), dtype=np.float64)
    s = np.zeros(P.shape[1])
    c = np.zeros(P.shape[1])
    kernels.neumaier_rows(P, s, c)
    return (s + c) / P.shape[0]


def forest_predict(forest: Forest, x, threads: int | None = None):
    """Average of the tree predictions at one point or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    Q = np.ascontiguousarray(np.atleast_2d(x))
    s = np.zeros(Q.shape[0])
    c = np.zeros(Q.shape[0])

    def run(a: int, b: int) -> np.ndarray:
        return np.vstack([tree_predict(t, forest.data, Q) for t in forest.trees[a:b]])

    for block in map_chunks(run, forest.M, _CHUNK, threads):
        kernels.neumaier_rows(block, s, c)
    out = (s + c) / forest.M
    return float(out[0]) if single else out


def leaf_counts(forest: Forest, Q: np.ndarray) -> dict[int, np.ndarray]:
    """For each leaf size ``N``, how often each point sits in a size-``N`` leaf with the query."""
    n, nq = forest.data.n, Q.shape[0]
    counts: dict[int, np.ndarray] = {}
    rows = np.arange(nq)
    for tree in forest.trees:
        leaves = kernels.apply(tree.feature, tree.threshold, tree.left, tree.right, Q)
        if tree.members is None:
            start, count, members = kernels.attach(
                tree.feature, tree.threshold, tree.left, tree.right, forest.data.points
            )
        else:
            start, count, members = tree.start, tree.count, tree.members
        sizes = count[leaves]
        single = sizes == 1
        if single.any():
            arr = counts.setdefault(1, np.zeros((nq, n), dtype=np.int64))
            np.add.at(arr, (rows[single], members[start[leaves[single]]]), 1)
        for r in np.flatnonzero(sizes > 1):
            N = int(sizes[r])
            arr = counts.setdefault(N, np.zeros((nq, n), dtype=np.int64))
            leaf = leaves[r]
            np.add.at(arr[r], members[start[leaf]:start[leaf] + N], 1)
    return counts


def forest_weights(forest: Forest, x) -> np.ndarray:
    """Forest weights ``W_i(x)``, shape ``(n,)`` or ``(n_queries, n)``.

    Each weight is the correctly rounded value of an exact rational
    ``sum_N count_N / (N M)``; see :func:`forest_weights_exact`.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    Q = np.ascontiguousarray(np.atleast_2d(x))
    counts = leaf_counts(forest, Q)
    W = np.zeros((Q.shape[0], forest.data.n))
    if len(counts) == 1:
        (N, arr), = counts.items()
        W = arr / float(N * forest.M)
    elif counts:
        for r, i in zip(*np.nonzero(sum(a > 0 for a in counts.values()))):
            W[r, i] = float(sum(Fraction(int(a[r, i]), N * forest.M) for N, a in counts.items()))
    return W[0] if single else W


def forest_weights_exact(forest: Forest, x) -> dict[int, Fraction]:
    """Nonzero forest weights at one query point as exact fractions."""
    Q = np.ascontiguousarray(np.asarray(x, dtype=np.float64).reshape(1, -1))
    out: dict[int, Fraction] = {}
    for N, arr in sorted(leaf_counts(forest, Q).items()):
        for i in np.flatnonzero(arr[0]):
            out[int(i)] = out.get(int(i), Fraction(0)) + Fraction(int(arr[0, i]), N * forest.M)
    return out


@dataclass(frozen=True)
class VarianceEstimate:
    """Sample variance over trees with its standard error.

    ``bound`` and ``passed`` are filled by :func:`sigma_tilde_sq` only.
    """

    value: np.ndarray | float
    standard_error: np.ndarray | float
    trials: int
    bound: float | None = None
    passed: bool | np.ndarray | None = None


def _variance_with_se(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # unbiased variance and the plug-in standard error of s^2
    M = P.shape[0]
    centred = P - compensated_mean(P)
    m2 = np.mean(centred**2, axis=0)
    m4 = np.mean(centred**4, axis=0)
    var = m2 * M / (M - 1)
    se2 = (m4 - var**2 * (M - 3) / (M - 1)) / M
    return var, np.sqrt(np.maximum(se2, 0.0))


def theta_variance(data: TrainingSet, cfg: BuilderConfig, x, M_var: int, seed: int, threads: int | None = None) -> VarianceEstimate:
    """Variance over the tree randomness of a single tree's prediction at ``x``."""
    if M_var < 2:
        raise ConfigError("M_var must be at least 2")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    seeds = rng.derive_seeds(seed, "theta-variance", int(M_var))
    P = tree_prediction_matrix(data, cfg, seeds, np.atleast_2d(x), threads)
    var, se = _variance_with_se(P)
    if single:
        return VarianceEstimate(float(var[0]), float(se[0]), int(M_var))
    return VarianceEstimate(var, se, int(M_var))


def sigma_tilde_sq(data: TrainingSet, cfg: BuilderConfig, x, M_var: int, seed: int, threads: int | None = None) -> VarianceEstimate:
    """Asymptotic variance of the scaled forest error; checked against ``4 max Y^2``."""
    est = theta_variance(data, cfg, x, M_var, seed, threads)
    bound = 4.0 * float(np.max(data.responses**2))
    passed = np.asarray(est.value) <= bound + 3.0 * np.asarray(est.standard_error)
    passed = bool(passed) if np.ndim(passed) == 0 else passed
    return VarianceEstimate(est.value, est.standard_error, est.trials, bound, passed)


@dataclass(frozen=True)
class InfiniteReference:
    """Large-ensemble stand-in for the infinite forest at fixed query points."""

    M_ref: int
    master_seed: int
    queries: np.ndarray
    mean: np.ndarray
    tree_variance: np.ndarray

    @property
    def standard_error(self) -> np.ndarray:
        return np.sqrt(self.tree_variance / self.M_ref)


def check_reference_size(M_ref: int, M_list: Sequence[int]) -> None:
    if M_list and M_ref < 100 * max(M_list):
        raise ConfigError(f"M_ref={M_ref} must be at least 100 x max(M)={100 * max(M_list)}")


def infinite_reference(
    data: TrainingSet,
    cfg: BuilderConfig,
    M_ref: int,
    Q,
    master_seed: int,
    compared_M: Sequence[int] = (),
    threads: int | None = None,
    tag: str = "reference",
    block: int = 4096,
) -> InfiniteReference:
    """Mean and per-tree variance over ``M_ref`` trees, streamed in blocks."""
    check_reference_size(M_ref, compared_M)
    if M_ref < 2:
        raise ConfigError("M_ref must be at least 2")
    Q = np.ascontiguousarray(np.atleast_2d(np.asarray(Q, dtype=np.float64)))
    nq = Q.shape[0]
    s0, c0 = np.zeros(nq), np.zeros(nq)
    s1, c1 = np.zeros(nq), np.zeros(nq)
    s2, c2 = np.zeros(nq), np.zeros(nq)
    all_seeds = rng.derive_seeds(master_seed, tag, int(M_ref))
    shift = None
    for start in range(0, M_ref, block):
        P = tree_prediction_matrix(data, cfg, all_seeds[start:start + block], Q, threads)
        if shift is None:
            shift = P[0].copy()
        # plain sum for the mean (matches compensated_mean), shifted sums for the variance
        kernels.neumaier_rows(P, s0, c0)
        D = P - shift
        kernels.neumaier_rows(D, s1, c1)
        kernels.neumaier_rows(D * D, s2, c2)
    S1, S2 = s1 + c1, s2 + c2
    mean = (s0 + c0) / M_ref
    var = np.maximum((S2 - S1 * S1 / M_ref) / (M_ref - 1), 0.0)
    return InfiniteReference(int(M_ref), int(master_seed), Q, mean, var)
