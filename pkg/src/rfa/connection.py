"""Connection function: probability that two points share a leaf.

Monte Carlo estimates work for every builder.  For uniform trees the
estimate follows only the cell that still holds both points, which has
the same law as building whole trees and is much cheaper.  Exact values
are available for uniform trees when one of the two points is the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import brentq

from . import rng
from ._backend import kernels
from .errors import ConfigError, InstanceTooLarge
from .model import TrainingSet
from .trees import BuilderConfig, UniformConfig, build_tree

__all__ = [
    "ConnectionEstimate",
    "GridStepEstimate",
    "CouplingReport",
    "connection_mc",
    "connection_mc_trees",
    "uniform_connection_1d",
    "uniform_connection_origin_multid",
    "coupling_inequality_check",
    "oracle_se",
    "grid_step_estimate",
    "grid_step_exact",
    "grid_step_bound",
    "grid_constant",
    "MAX_COMPOSITIONS",
]

# number of compositions of 25 into 6 parts; the largest supported instance
MAX_COMPOSITIONS = math.comb(25 + 5, 5)
_ROWS = 1 << 17


@dataclass(frozen=True)
class ConnectionEstimate:
    point_estimate: float
    trials: int
    successes: int
    standard_error: float

    @classmethod
    def from_counts(cls, successes: int, trials: int) -> "ConnectionEstimate":
        p = successes / trials
        return cls(p, int(trials), int(successes), math.sqrt(p * (1.0 - p) / trials))


def _pair(x, z) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if x.shape != z.shape:
        raise ConfigError("x and z must have the same dimension")
    if np.any((x < 0) | (x > 1) | (z < 0) | (z > 1)):
        raise ConfigError("points must lie in the unit cube")
    return x, z


def _uniform_connected(k: int, lo: np.ndarray, hi: np.ndarray, M: int, gen: np.random.Generator) -> int:
    """Count trees of level ``k`` whose leaf holds both corners ``lo <= hi``."""
    d = lo.shape[0]
    total = 0
    for s in range(0, M, _ROWS):
        m = min(_ROWS, M - s)
        U = gen.random((m, 2 * k)) if k else np.empty((m, 0))
        a = np.zeros((m, d))
        b = np.ones((m, d))
        alive = np.ones(m, dtype=bool)
        rows = np.arange(m)
        for level in range(k):
            j = np.minimum((U[:, 2 * level] * d).astype(np.int64), d - 1)
            aj = a[rows, j]
            t = aj + U[:, 2 * level + 1] * (b[rows, j] - aj)
            low, high = lo[j], hi[j]
            # a query goes left iff its coordinate is below t
            alive &= ~((low < t) & (t <= high))
            go_right = t <= low
            a[rows[go_right], j[go_right]] = t[go_right]
            b[rows[~go_right], j[~go_right]] = t[~go_right]
        total += int(alive.sum())
    return total


def connection_mc_trees(data: TrainingSet | None, cfg: BuilderConfig, points, M: int, seed: int) -> np.ndarray:
    """Leaf ids of ``points`` in ``M`` freshly built trees, shape ``(M, n_points)``."""
    P = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.float64)))
    seeds = rng.derive_seeds(seed, "connection/trees", int(M))
    out = np.empty((int(M), P.shape[0]), dtype=np.int64)
    for m, sd in enumerate(seeds):
        tree = build_tree(data, cfg, int(sd), d=P.shape[1])
        out[m] = kernels.apply(tree.feature, tree.threshold, tree.left, tree.right, P)
    return out


def connection_mc(
    data: TrainingSet | None,
    cfg: BuilderConfig,
    x,
    z,
    M: int,
    seed: int,
    method: str = "auto",
) -> ConnectionEstimate:
    """Fraction of ``M`` random trees in which ``x`` and ``z`` share a leaf.

    Parameters
    ----------
    data : TrainingSet or None
        Training set; unused by uniform trees.
    cfg : BuilderConfig
        Tree builder.
    x, z : array_like
        Points of the unit cube.
    M : int
        Number of trees.
    seed : int
        Master seed.  Both orderings of ``(x, z)`` use the same stream, so
        the estimate is exactly symmetric.
    method : {"auto", "path", "trees"}
        ``path`` follows the joint cell of uniform trees, ``trees`` builds
        full trees; ``auto`` picks ``path`` for uniform configs.
    """
    if M < 1:
        raise ConfigError("M must be at least 1")
    x, z = _pair(x, z)
    if method == "auto":
        method = "path" if isinstance(cfg, UniformConfig) else "trees"
    if method == "path":
        if not isinstance(cfg, UniformConfig):
            raise ConfigError("the path method applies to uniform trees only")
        gen = rng.generator(seed, "connection/path")
        hits = _uniform_connected(cfg.k, np.minimum(x, z), np.maximum(x, z), int(M), gen)
    elif method == "trees":
        leaves = connection_mc_trees(data, cfg, np.vstack([x, z]), M, seed)
        hits = int(np.count_nonzero(leaves[:, 0] == leaves[:, 1]))
    else:
        raise ConfigError(f"unknown method {method!r}")
    return ConnectionEstimate.from_counts(hits, int(M))


# ------------------------------------------------------------ closed forms


def uniform_connection_1d(k: int, x: float) -> float:
    """Exact connection between ``0`` and ``x`` for a level-``k`` uniform tree, ``d = 1``.

    Equals ``1 - x * sum_{j<k} w^j / j!`` with ``w = -log x``, the tail
    probability ``P[Poisson(w) >= k]``.  Terms follow the recurrence
    ``t_{j+1} = t_j * w / (j + 1)``; when ``w < k`` the complementary tail
    ``x * sum_{j>=k} w^j / j!`` is summed instead to avoid cancellation.
    """
    if k < 0:
        raise ConfigError("k must be non-negative")
    if not 0.0 <= x <= 1.0:
        raise ConfigError("x must lie in [0, 1]")
    if k == 0 or x == 0.0:
        return 1.0
    if x == 1.0:
        return 0.0
    w = -math.log(x)
    term = 1.0
    if w >= k:
        head = 0.0
        for j in range(k):
            head += term
            term *= w / (j + 1)
        return max(0.0, 1.0 - x * head)
    for j in range(k):
        term *= w / (j + 1)
    tail = 0.0
    j = k
    while term > 1e-18 * tail or tail == 0.0:
        tail += term
        j += 1
        term *= w / j
        if term == 0.0:
            break
    return min(1.0, x * tail)


def _compositions(k: int, d: int):
    # stars and bars: bar positions among k + d - 1 slots
    for bars in combinations(range(k + d - 1), d - 1):
        prev = -1
        parts = []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(k + d - 2 - prev)
        yield parts


def uniform_connection_origin_multid(k: int, x) -> float:
    """Exact connection between the origin and ``x`` for a level-``k`` uniform tree.

    Sums, over all ways of spreading the ``k`` cuts among the ``d``
    coordinates, the multinomial probability of that spread times the
    product of one-dimensional connections.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    d = x.shape[0]
    if k < 0 or d < 1:
        raise ConfigError("need k >= 0 and d >= 1")
    if k == 0:
        return 1.0
    n_terms = math.comb(k + d - 1, d - 1)
    if n_terms > MAX_COMPOSITIONS:
        raise InstanceTooLarge(f"instance too large: {n_terms} compositions of k={k} into d={d} parts")
    table = [[uniform_connection_1d(j, float(xm)) for j in range(k + 1)] for xm in x]
    fk = math.factorial(k)
    scale = float(d) ** (-k)
    total = 0.0
    for parts in _compositions(k, d):
        coef = fk
        prod = 1.0
        for m, km in enumerate(parts):
            coef //= math.factorial(km)
            prod *= table[m][km]
        total += coef * scale * prod
    return min(1.0, total)


@dataclass(frozen=True)
class CouplingReport:
    k: int
    x: np.ndarray
    z: np.ndarray
    closed_form: float
    mc: ConnectionEstimate
    boundary_se: float
    passed: bool


def oracle_se(p: float, M: int) -> float:
    """Standard error of an ``M``-tree connection estimate whose true value is ``p``.

    Unlike the plug-in ``sqrt(p_hat (1 - p_hat) / M)`` it does not vanish
    when no tree connects the pair, which happens whenever ``p M << 1``.
    """
    return math.sqrt(max(p * (1.0 - p), 0.0) / M)


def coupling_inequality_check(cfg: UniformConfig, x, z, M: int, seed: int) -> CouplingReport:
    """Check that the origin connection at ``|x - z|`` lower-bounds the connection of ``(x, z)``.

    The one-sided check ``closed <= mc + 3 SE`` uses the standard error at
    the boundary value ``p = closed``.
    """
    if not isinstance(cfg, UniformConfig):
        raise ConfigError("coupling check needs a uniform builder")
    x, z = _pair(x, z)
    closed = uniform_connection_origin_multid(cfg.k, np.abs(x - z))
    est = connection_mc(None, cfg, x, z, M, seed)
    se = oracle_se(closed, int(M))
    passed = closed <= est.point_estimate + 3.0 * se
    return CouplingReport(cfg.k, x, z, closed, est, se, bool(passed))


# --------------------------------------------------------------- grid step


def grid_constant(k: int, d: int) -> float:
    """``(8 d e (k + 2)!)^(1/3)``."""
    return (8.0 * d * math.e * math.factorial(k + 2)) ** (1.0 / 3.0)


def grid_step_bound(k: int, d: int, epsilon: float) -> tuple[float, float]:
    """Two readings of the grid-step lower bound for uniform trees.

    Returns ``(exp(-A / eps^(2/3)), exp(-A^(1/3) / eps^(2/3)))`` with
    ``A = grid_constant(k, d)``.
    """
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    A = grid_constant(k, d)
    e23 = epsilon ** (2.0 / 3.0)
    return math.exp(-A / e23), math.exp(-(A ** (1.0 / 3.0)) / e23)


def grid_step_exact(k: int, d: int, epsilon: float) -> float:
    """Exact grid step of a level-``k`` uniform forest.

    The worst pair at sup-distance ``eta`` is the origin and ``eta * 1``,
    so the grid step solves ``1 - K_k(0, eta * 1) = eps^2 / 8``.
    """
    target = epsilon**2 / 8.0
    if k == 0 or target >= 1.0:
        return 1.0

    def gap(eta: float) -> float:
        return 1.0 - uniform_connection_origin_multid(k, np.full(d, eta)) - target

    if gap(1.0) <= 0.0:
        return 1.0
    return brentq(gap, 0.0, 1.0, xtol=1e-15, rtol=1e-13)


@dataclass(frozen=True)
class GridStepEstimate:
    epsilon: float
    delta_hat: float
    probe_resolution: int
    analytic_bound: tuple[float, float] | None
    exact: float | None
    rows: list = field(default_factory=list)


def _probe_pairs(d: int, eta: float, n_random: int, gen: np.random.Generator):
    pairs = []
    bases = [np.zeros(d)] + [gen.random(d) * (1.0 - eta) for _ in range(n_random)]
    for j in range(d):
        for b in bases:
            z = b.copy()
            z[j] = b[j] + eta
            pairs.append((b, np.minimum(z, 1.0)))
    for _ in range(n_random):
        b = gen.random(d) * (1.0 - eta)
        pairs.append((b, np.minimum(b + eta, 1.0)))
    pairs.append((np.zeros(d), np.full(d, eta)))
    return pairs


def grid_step_estimate(
    data: TrainingSet | None,
    cfg: BuilderConfig,
    epsilon: float,
    probe_resolution: int,
    M: int,
    seed: int,
    d: int | None = None,
    n_random: int = 4,
) -> GridStepEstimate:
    """Largest dyadic separation whose probe pairs all stay nearly connected.

    Separations are ``2^0, 2^-1, ..., 2^-probe_resolution``.  A separation
    ``eta`` is accepted when every probe pair at separation ``<= eta`` has
    ``1 - K_hat <= eps^2 / 8 + 3 SE``.  The connection estimates do not
    depend on ``epsilon``, so the result is monotone in ``epsilon``.
    """
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if probe_resolution < 0:
        raise ConfigError("probe_resolution must be non-negative")
    dim = d if d is not None else (data.d if data is not None else None)
    if dim is None:
        raise ConfigError("dimension unknown: pass data or d")
    target = epsilon**2 / 8.0
    gen = rng.generator(seed, "grid-step/probes")
    rows = []
    worst_excess = []
    idx = 0
    for r in range(probe_resolution + 1):
        eta = 2.0**-r
        sup_gap, sup_se, excess = 0.0, 0.0, -math.inf
        for a, b in _probe_pairs(dim, eta, n_random, gen):
            est = connection_mc(data, cfg, a, b, M, rng.derive_seed(seed, "grid-step/mc", idx))
            idx += 1
            g = 1.0 - est.point_estimate
            if g > sup_gap:
                sup_gap, sup_se = g, est.standard_error
            excess = max(excess, g - target - 3.0 * est.standard_error)
        rows.append({"eta": eta, "sup_gap": sup_gap, "se": sup_se})
        worst_excess.append(excess)
    # separations are visited from large to small; accept eta when it and all smaller ones pass
    delta = 0.0
    ok_below = True
    for r in range(probe_resolution, -1, -1):
        ok_below = ok_below and worst_excess[r] <= 0.0
        if ok_below:
            delta = 2.0**-r
    uniform = isinstance(cfg, UniformConfig)
    bound = grid_step_bound(cfg.k, dim, epsilon) if uniform else None
    exact = grid_step_exact(cfg.k, dim, epsilon) if uniform else None
    return GridStepEstimate(float(epsilon), delta, int(probe_resolution), bound, exact, rows)
