"""Axis-aligned partition trees and their builders.

Three builders share one node layout (see ``rfa._fallback``):

* :func:`build_uniform_tree` cuts every cell exactly ``k`` times, with the
  dimension uniform on ``{0..d-1}`` and the position uniform on the cell
  side.  It never looks at data.
* :func:`build_quantile_tree` subsamples ``a_n`` points without
  replacement and splits at a random empirical quantile of the cell's
  points, dropping the split point itself, until each cell holds one
  point.  Two-point cells are cut at the midpoint.
* :func:`build_breiman_tree` is CART with ``mtry`` candidate dimensions
  per node and midpoint thresholds.

A query goes to the left child when its coordinate is strictly below the
threshold, so cells are half-open ``[lower, upper)`` except on the upper
face of the unit cube.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np

from ._backend import kernels
from ._fallback import _Uniforms
from .errors import ConfigError, PreconditionError
from .model import TrainingSet

__all__ = [
    "UniformConfig",
    "QuantileConfig",
    "BreimanConfig",
    "BuilderConfig",
    "builder_from_dict",
    "Cell",
    "Tree",
    "build_uniform_tree",
    "build_quantile_tree",
    "build_breiman_tree",
    "build_tree",
    "empirical_quantile",
    "tree_leaf",
    "tree_predict",
    "tree_weights",
    "tree_weights_exact",
    "cell_of",
    "cell_diameter",
    "cell_bounds",
    "leaf_cells",
    "tree_to_dict",
    "tree_to_json",
]


# ------------------------------------------------------------------ configs


@dataclass(frozen=True)
class UniformConfig:
    """Data-independent tree of level ``k``."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ConfigError(f"k must be a non-negative integer, got {self.k!r}")
        if self.k > 40:
            raise ConfigError("k > 40 would allocate more than 2^41 nodes")

    @property
    def tag(self) -> str:
        return f"uniform(k={self.k})"

    def to_dict(self) -> dict:
        return {"builder": "uniform", "k": self.k}


@dataclass(frozen=True)
class QuantileConfig:
    """Quantile tree on a subsample of ``a_n`` points.

    ``q_n=None`` draws the quantile level uniformly on the admissible
    interval at every split; a number fixes it (clamped into the interval).
    """

    a_n: int
    q: float = 0.8
    q_n: float | None = None

    def __post_init__(self):
        if int(self.a_n) != self.a_n or self.a_n < 3:
            raise ConfigError(f"a_n must be an integer >= 3, got {self.a_n!r}")
        if not 0.5 <= self.q < 1.0:
            raise ConfigError(f"q must lie in [1/2, 1), got {self.q!r}")
        if self.q_n is not None and not 0.0 < self.q_n < 1.0:
            raise ConfigError(f"fixed q_n must lie in (0, 1), got {self.q_n!r}")

    @property
    def fixed_qn(self) -> float:
        return math.nan if self.q_n is None else float(self.q_n)

    @property
    def tag(self) -> str:
        pol = "random" if self.q_n is None else f"{self.q_n:g}"
        return f"quantile(q={self.q:g},a_n={self.a_n},q_n={pol})"

    def to_dict(self) -> dict:
        return {"builder": "quantile", "a_n": self.a_n, "q": self.q, "q_n": self.q_n}


@dataclass(frozen=True)
class BreimanConfig:
    """CART tree; ``mtry=None`` uses every dimension."""

    nodesize: int = 5
    mtry: int | None = None
    resample: str = "none"
    a_n: int | None = None

    def __post_init__(self):
        if int(self.nodesize) != self.nodesize or self.nodesize < 1:
            raise ConfigError("nodesize must be a positive integer")
        if self.mtry is not None and self.mtry < 1:
            raise ConfigError("mtry must be at least 1")
        if self.resample not in ("none", "subsample", "bootstrap"):
            raise ConfigError(f"unknown resample mode {self.resample!r}")
        if self.resample == "subsample" and (self.a_n is None or self.a_n < 1):
            raise ConfigError("subsample resampling needs a_n >= 1")

    @property
    def tag(self) -> str:
        extra = f",a_n={self.a_n}" if self.resample == "subsample" else ""
        return f"breiman(nodesize={self.nodesize},mtry={self.mtry},{self.resample}{extra})"

    def to_dict(self) -> dict:
        return {
            "builder": "breiman",
            "nodesize": self.nodesize,
            "mtry": self.mtry,
            "resample": self.resample,
            "a_n": self.a_n,
        }


BuilderConfig = Union[UniformConfig, QuantileConfig, BreimanConfig]


def builder_from_dict(obj: dict) -> BuilderConfig:
    kind = obj.get("builder")
    rest = {k: v for k, v in obj.items() if k != "builder"}
    if kind == "uniform":
        return UniformConfig(**rest)
    if kind == "quantile":
        return QuantileConfig(**rest)
    if kind == "breiman":
        return BreimanConfig(**rest)
    raise ConfigError(f"unknown builder {kind!r}")


# -------------------------------------------------------------------- types


@dataclass(frozen=True)
class Cell:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi) or np.any(lo < 0) or np.any(hi > 1):
            raise ConfigError("a cell needs 0 <= lower <= upper <= 1")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        above = x >= self.lower
        below = (x < self.upper) | ((self.upper == 1.0) & (x <= 1.0))
        return bool(np.all(above & below))

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))


@dataclass(frozen=True, eq=False)
class Tree:
    """Immutable tree in flat-array form.

    ``members`` is ``None`` for uniform trees: their partition does not
    depend on data and leaf contents are computed from whatever training
    set is passed to the prediction functions.
    """

    d: int
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    theta_seed: int
    config: BuilderConfig
    excluded: np.ndarray | None = None
    start: np.ndarray | None = None
    count: np.ndarray | None = None
    members: np.ndarray | None = None
    n_data: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("feature", "threshold", "left", "right", "excluded", "start", "count", "members"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, copy=True)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    @property
    def data_dependent(self) -> bool:
        return self.members is not None


# ---------------------------------------------------------------- builders


def build_uniform_tree(d: int, k: int, theta_seed: int) -> Tree:
    """Full binary tree of level ``k``; uses no data."""
    if d < 1:
        raise ConfigError("d must be at least 1")
    cfg = UniformConfig(k)
    f, t, l, r = kernels.build_uniform(int(d), int(k), int(theta_seed))
    return Tree(int(d), f, t, l, r, int(theta_seed), cfg)


def empirical_quantile(values, q_n: float) -> tuple[int, float]:
    """Order statistic ``X_(l)`` with ``(l-1)/N <= q_n < l/N``.

    Parameters
    ----------
    values : sequence of float
        Sorted sample of size ``N``.
    q_n : float
        Level in the open interval ``(1/N, 1 - 1/N)``.

    Returns
    -------
    (int, float)
        The 1-based rank ``l`` and the value ``X_(l)``.
    """
    v = np.asarray(values, dtype=float)
    N = v.shape[0]
    if N == 0:
        raise PreconditionError("empty sample")
    if np.any(np.diff(v) < 0):
        raise PreconditionError("values must be sorted")
    if not 1.0 / N < q_n < 1.0 - 1.0 / N:
        raise PreconditionError(f"q_n={q_n} outside (1/N, 1-1/N) for N={N}")
    ell = kernels.quantile_rank(float(q_n), N)
    return ell, float(v[ell - 1])


def build_quantile_tree(data: TrainingSet, cfg: QuantileConfig, theta_seed: int) -> Tree:
    """Quantile tree with one retained point per leaf (ties aside)."""
    if cfg.a_n > data.n:
        raise ConfigError(f"a_n={cfg.a_n} exceeds n={data.n}")
    f, t, l, r, ex, st, ct, mb = kernels.build_quantile(
        data.points, int(cfg.a_n), float(cfg.q), cfg.fixed_qn, int(theta_seed)
    )
    return Tree(data.d, f, t, l, r, int(theta_seed), cfg, ex, st, ct, mb, data.n)


def _draw_index(draw, n: int) -> int:
    j = int(draw() * n)
    return j if j < n else n - 1


def _partial_shuffle(draw, n: int, m: int) -> list[int]:
    perm = list(range(n))
    for i in range(m):
        j = i + _draw_index(draw, n - i)
        perm[i], perm[j] = perm[j], perm[i]
    return perm[:m]


def _best_split(X, Y, idx, dims):
    """Largest variance reduction over midpoints; ties -> smallest (dim, position)."""
    y_all = Y[idx]
    tol = 1e-12 * float(np.dot(y_all, y_all))
    best = None
    N = idx.shape[0]
    for j in sorted(dims):
        col = X[idx, j]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        cs = np.cumsum(y_all[order])
        total = cs[-1]
        n_l = np.arange(1, N)
        gap = xs[1:] > xs[:-1]
        if not gap.any():
            continue
        mean_l = cs[:-1] / n_l
        mean_r = (total - cs[:-1]) / (N - n_l)
        gain = n_l * (N - n_l) / N * (mean_l - mean_r) ** 2
        gain = np.where(gap, gain, -np.inf)
        i = int(np.argmax(gain))
        g = float(gain[i])
        if not g > tol:
            continue
        t = 0.5 * (xs[i] + xs[i + 1])
        if t <= xs[i]:
            t = xs[i + 1]
        if best is None or g > best[0]:
            best = (g, j, float(t))
    return best


def build_breiman_tree(data: TrainingSet, cfg: BreimanConfig, theta_seed: int) -> Tree:
    """CART regression tree on an optionally resampled training set.

    Random draws, in order: the resample, then ``mtry`` candidate
    dimensions per node visited depth-first (left subtree first).
    """
    X, Y = data.points, data.responses
    n, d = X.shape
    mtry = d if cfg.mtry is None else cfg.mtry
    if mtry > d:
        raise ConfigError(f"mtry={mtry} exceeds d={d}")
    draw = _Uniforms(int(theta_seed))
    if cfg.resample == "none":
        sample = np.arange(n, dtype=np.int64)
    elif cfg.resample == "subsample":
        if cfg.a_n > n:
            raise ConfigError(f"a_n={cfg.a_n} exceeds n={n}")
        sample = np.asarray(_partial_shuffle(draw, n, cfg.a_n), dtype=np.int64)
    else:
        sample = np.asarray([_draw_index(draw, n) for _ in range(n)], dtype=np.int64)
    if sample.size == 0:
        raise ConfigError("empty resample")

    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    leaves: dict[int, np.ndarray] = {}
    stack = [(0, sample)]
    while stack:
        v, idx = stack.pop()
        split = None
        if idx.shape[0] > cfg.nodesize:
            dims = _partial_shuffle(draw, d, mtry)
            split = _best_split(X, Y, idx, dims)
        if split is None:
            leaves[v] = idx
            continue
        _, j, t = split
        go_left = X[idx, j] < t
        lid = len(feature)
        feature += [-1, -1]
        threshold += [0.0, 0.0]
        left += [-1, -1]
        right += [-1, -1]
        feature[v], threshold[v], left[v], right[v] = j, t, lid, lid + 1
        stack.append((lid + 1, idx[~go_left]))
        stack.append((lid, idx[go_left]))

    n_nodes = len(feature)
    start = np.zeros(n_nodes, dtype=np.int64)
    count = np.zeros(n_nodes, dtype=np.int64)
    members: list[int] = []
    for v in range(n_nodes):
        if v in leaves:
            start[v] = len(members)
            count[v] = leaves[v].shape[0]
            members.extend(leaves[v].tolist())
    return Tree(
        d,
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        int(theta_seed),
        cfg,
        np.full(n_nodes, -1, dtype=np.int64),
        start,
        count,
        np.asarray(members, dtype=np.int64),
        n,
    )


def build_tree(data: TrainingSet | None, cfg: BuilderConfig, theta_seed: int, d: int | None = None) -> Tree:
    """Dispatch on the builder config."""
    if isinstance(cfg, UniformConfig):
        dim = d if d is not None else data.d
        return build_uniform_tree(dim, cfg.k, theta_seed)
    if data is None:
        raise ConfigError(f"{cfg.tag} needs a training set")
    if isinstance(cfg, QuantileConfig):
        return build_quantile_tree(data, cfg, theta_seed)
    if isinstance(cfg, BreimanConfig):
        return build_breiman_tree(data, cfg, theta_seed)
    raise ConfigError(f"unknown builder config {cfg!r}")


# --------------------------------------------------------------- evaluation


def _as_batch(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    Q = np.atleast_2d(x)
    if Q.shape[1] != d:
        raise ConfigError(f"query dimension {Q.shape[1]} does not match tree dimension {d}")
    return np.ascontiguousarray(Q), single


def _leaf_stats(tree: Tree, data: TrainingSet):
    if data.d != tree.d:
        raise ConfigError("training set dimension does not match the tree")
    if tree.members is None:
        return kernels.attach(tree.feature, tree.threshold, tree.left, tree.right, data.points)
    if tree.n_data != data.n:
        raise ConfigError("tree was built on a different training set")
    return tree.start, tree.count, tree.members


def tree_leaf(tree: Tree, x) -> np.ndarray | int:
    """Leaf node id containing each query point."""
    Q, single = _as_batch(x, tree.d)
    leaf = kernels.apply(tree.feature, tree.threshold, tree.left, tree.right, Q)
    return int(leaf[0]) if single else leaf


def tree_predict(tree: Tree, data: TrainingSet, x):
    """Mean retained response in the leaf of ``x``; 0 for an empty leaf."""
    Q, single = _as_batch(x, tree.d)
    start, count, members = _leaf_stats(tree, data)
    values = kernels.leaf_values(start, count, members, data.responses)
    out = values[kernels.apply(tree.feature, tree.threshold, tree.left, tree.right, Q)]
    return float(out[0]) if single else out


def tree_weights(tree: Tree, data: TrainingSet, x) -> np.ndarray:
    """Weight of every training point at one query point.

    Returns a vector of length ``n``: ``1/N`` for each of the ``N``
    retained points in the leaf of ``x`` (counted with multiplicity for
    bootstrap trees), 0 elsewhere.
    """
    start, count, members = _leaf_stats(tree, data)
    leaf = tree_leaf(tree, np.asarray(x, dtype=float).reshape(-1))
    w = np.zeros(data.n)
    N = int(count[leaf])
    if N:
        seg = members[start[leaf]:start[leaf] + N]
        np.add.at(w, seg, 1.0 / N)
    return w


def tree_weights_exact(tree: Tree, data: TrainingSet, x) -> dict[int, Fraction]:
    """Nonzero weights of :func:`tree_weights` as exact fractions."""
    start, count, members = _leaf_stats(tree, data)
    leaf = tree_leaf(tree, np.asarray(x, dtype=float).reshape(-1))
    N = int(count[leaf])
    out: dict[int, Fraction] = {}
    for i in members[start[leaf]:start[leaf] + N].tolist():
        out[i] = out.get(i, Fraction(0)) + Fraction(1, N)
    return out


def cell_of(tree: Tree, x) -> Cell:
    """Leaf cell containing ``x``."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != tree.d:
        raise ConfigError("query dimension does not match the tree")
    lo = np.zeros(tree.d)
    hi = np.ones(tree.d)
    node = 0
    while tree.feature[node] >= 0:
        j = tree.feature[node]
        t = tree.threshold[node]
        if x[j] < t:
            hi[j] = t
            node = tree.left[node]
        else:
            lo[j] = t
            node = tree.right[node]
    return Cell(lo, hi)


def cell_bounds(tree: Tree, Q) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper corners of the leaf cell of every query, each ``(n_queries, d)``."""
    Q, _ = _as_batch(Q, tree.d)
    nq = Q.shape[0]
    lo = np.zeros((nq, tree.d))
    hi = np.ones((nq, tree.d))
    node = np.zeros(nq, dtype=np.int64)
    rows = np.arange(nq)
    active = tree.feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[r]
        j = tree.feature[nd]
        t = tree.threshold[nd]
        go_left = Q[r, j] < t
        hi[r[go_left], j[go_left]] = t[go_left]
        lo[r[~go_left], j[~go_left]] = t[~go_left]
        node[r] = np.where(go_left, tree.left[nd], tree.right[nd])
        active = tree.feature[node] >= 0
    return lo, hi


def cell_diameter(cell: Cell) -> float:
    """Sup-norm diameter, the longest side."""
    return float(np.max(cell.upper - cell.lower)) if cell.lower.size else 0.0


def leaf_cells(tree: Tree) -> dict[int, Cell]:
    """Every leaf id with its cell."""
    out: dict[int, Cell] = {}
    stack = [(0, np.zeros(tree.d), np.ones(tree.d))]
    while stack:
        node, lo, hi = stack.pop()
        j = tree.feature[node]
        if j < 0:
            out[node] = Cell(lo, hi)
            continue
        t = tree.threshold[node]
        lhi = hi.copy()
        lhi[j] = t
        rlo = lo.copy()
        rlo[j] = t
        stack.append((tree.right[node], rlo, hi))
        stack.append((tree.left[node], lo, lhi))
    return out


def tree_to_dict(tree: Tree) -> dict:
    """Nested node description for debugging and golden files."""

    def node(v: int) -> dict:
        if tree.feature[v] < 0:
            out: dict = {"leaf": v}
            if tree.members is not None:
                s, c = int(tree.start[v]), int(tree.count[v])
                out["indices"] = tree.members[s:s + c].tolist()
            return out
        out = {
            "node": v,
            "dim": int(tree.feature[v]),
            "position": float(tree.threshold[v]),
            "left": node(int(tree.left[v])),
            "right": node(int(tree.right[v])),
        }
        if tree.excluded is not None and tree.excluded[v] >= 0:
            out["excluded"] = int(tree.excluded[v])
        return out

    return {"d": tree.d, "theta_seed": tree.theta_seed, "config": tree.config.to_dict(), "root": node(0)}


def tree_to_json(tree: Tree) -> str:
    return json.dumps(tree_to_dict(tree), indent=1)
